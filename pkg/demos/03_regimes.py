"""Density regimes: where mean interference meets the noise floor, and where coverage peaks."""
from smallcell import config as C
from smallcell import regimes as R

cfg = C.default_scenario()
opts = R.SolverOptions(bracket=(1e-6, 1e4))

rep = R.regime_report(cfg, epsilon=100.0, opts=opts)
for name, lam, resid, it in rep.rows():
    print(f"{name:8s} lambda={lam:10.4g}  residual={resid:+.2e}  steps={it}")
print("peak coverage", round(rep.p_c_max, 4), "ordered:", rep.ordered)

# mean interference (serving BS excluded) in units of the noise power
sc = R.build_scenario(cfg)
for lam in (0.01, 0.1, 1.0, 10.0, 100.0):
    print(f"E[I]/eta at {lam:g}/km^2 = {R.mean_interference_analytic(sc.at_density(lam)) / cfg.noise_w:.3g}")
