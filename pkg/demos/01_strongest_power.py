"""Strongest received power at a typical user.

Builds the equivalent one-dimensional scenario for the default small-cell
setup, prints the median strongest power at two densities and compares the
analytic CDF against a quick simulation.
"""
import numpy as np

from smallcell import config as C
from smallcell import equivalence as E
from smallcell import montecarlo as M

cfg = C.default_scenario()
sc = E.build_scenario(cfg)
print("backend:", sc.backend)

for lam in (10.0, 100.0):
    s = sc.at_density(lam)
    med = E.strongest_power_quantile(s, 0.5)
    rec = M.simulate(cfg.with_(lam=lam), 5000, seed=0)
    ks = M.ks_distance(rec.serving_power, s.strongest_power_cdf)
    print(f"lambda={lam:6g}/km^2  median {10*np.log10(med)+30:7.2f} dBm   KS vs simulation {ks:.4f}")

# the CDF on a dBm grid, as the cdf command writes it
s = sc.at_density(10.0)
g_dbm = np.arange(-60, 1, 10)
for g, f in zip(g_dbm, s.strongest_power_cdf(10 ** ((g_dbm - 30) / 10))):
    print(f"  P[max power <= {g:4d} dBm] = {f:.4f}")
