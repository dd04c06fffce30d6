"""Coverage probability against BS density, analytic and simulated.

The analytic curve reuses one set of intensity tables for every density.
"""
import numpy as np

from smallcell import config as C
from smallcell import coverage as V
from smallcell import equivalence as E
from smallcell import montecarlo as M

cfg = C.default_scenario()
sc = E.build_scenario(cfg)

print(" lambda   p_c(SINR)  p_c(SIR)   MC(SINR)  [95% CI]")
for lam in (0.1, 1.0, 10.0, 100.0, 1000.0):
    eng = V.CoverageEngine(sc.at_density(lam))
    sinr = eng.coverage().p_c
    sir = eng.coverage(noise=0.0).p_c
    est = M.estimate_coverage(cfg.with_(lam=lam), 5000, seed=1)
    print(f"{lam:7g}   {sinr:.4f}    {sir:.4f}    {est.p:.4f}   [{est.ci_low:.3f}, {est.ci_high:.3f}]")

# dense limit: only the LoS exponent survives
print("limit for alpha_L=2.42, T=1:", round(V.asymptotic_coverage(2.42, 1.0), 4))
for lam in (1e4, 1e5):
    r = V.coverage_probability(cfg.with_(lam=lam, metric=C.SIR), scenario=sc)
    print(f"  SIR coverage at {lam:g}/km^2: {r.p_c:.4f}")

# a LoS-only Rayleigh network sits on the limit at every density
los = C.sirp_rayleigh(metric=C.SIR, blockage=C.Step(1e12))
print("LoS-only Rayleigh:", [round(V.coverage_probability(los.with_(lam=x)).p_c, 4) for x in (1.0, 100.0)])
