"""Upper bound on area spectral efficiency over a few densities.

Each point integrates the coverage curve over all thresholds, so it takes
about a minute; the check against lambda * E[log2(1 + SINR)] from
simulation is cheap.
"""
import numpy as np

from smallcell import config as C
from smallcell import coverage as V
from smallcell import equivalence as E
from smallcell import montecarlo as M

cfg = C.default_scenario()
sc = E.build_scenario(cfg)
quad = V.QuadratureSpec(target_abs_tol=1e-3)

for lam in (1.0, 12.7, 23.4):
    eng = V.CoverageEngine(sc.at_density(lam), quad)
    ase = V.ase_upper_bound(cfg.with_(lam=lam), p_c_fn=lambda u: eng.coverage(threshold=u).p_c)
    rec = M.simulate(cfg.with_(lam=lam), 20000, seed=2)
    mc = lam * np.log2(1 + rec.sinr)
    print(f"lambda={lam:5g}  ASE {ase:8.3f}   simulated {mc.mean():8.3f} +- {mc.std() / np.sqrt(len(mc)):.3f}  bps/Hz/km^2")
