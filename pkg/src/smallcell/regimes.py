"""Density regime boundaries: noise-limited / signal-dominated / interference-dominated / interference-limited.

The two outer boundaries are where the mean interference (serving BS
excluded) crosses eta and eps*eta; they are found by bisection on log10(lambda).
The default curve is the exact power-domain mean

    E[I] = int_0^inf q m(q) (1 - exp(-M(q))) dq,   m = -dM/dq,

i.e. every BS below the strongest one, weighted by the chance that something
stronger exists.  The Monte Carlo sample mean is available as well, with one
fixed seed at every density, but its variance is infinite when the LoS
exponent is below 4, so it is a poor root-finding target.  The middle boundary
is the density maximising coverage, found by a bounded scalar search.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .config import NetworkConfig, validate
from .coverage import CoverageEngine
from .equivalence import EquivalentScenario, build_scenario
from .montecarlo import mean_interference

log = logging.getLogger(__name__)

DEFAULT_BRACKET = (1e-2, 1e4)
DEFAULT_EPSILON = 100.0


class BracketError(RuntimeError):
    """The target level is not crossed inside the search bracket."""


@dataclass(frozen=True)
class SolverOptions:
    bracket: tuple = DEFAULT_BRACKET
    trials: int = 10_000
    seed: int = 0
    threads: int = 1
    rtol: float = 0.02          # relative tolerance on E[I] / target
    xtol: float = 1e-4          # bracket width in decades at which bisection gives up
    max_iter: int = 60
    engine: str = "analytic"    # or "mc"


@dataclass(frozen=True)
class Boundary:
    lam: float
    target: float
    value: float                # E[I] (or p_c) at lam
    iterations: int
    bracket: tuple
    converged: bool

    @property
    def residual(self) -> float:
        return self.value / self.target - 1.0


def mean_interference_analytic(sc: EquivalentScenario, epsrel: float = 1e-9) -> float:
    """Mean interference (watts) at the typical user, serving BS excluded."""
    ncomp = len(sc.components)

    def f(z):
        q = math.exp(z)
        dens = sum(float(sc.serving_density_logp(k, q)) for k in range(ncomp))
        return q * dens * -math.expm1(-float(sc.count_above(q)))

    # integrand ~ q^(1 - 2/alpha) below and ~ q^(1 - 4/alpha) above the bulk
    z_lo = _log_power_at_count(sc, 1e3) - 60.0
    z_hi = _log_power_at_count(sc, 1e-14)
    edges = np.arange(z_lo, z_hi + 2.0, 2.0)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += integrate.quad(f, a, b, epsabs=0.0, epsrel=epsrel, limit=100)[0]
    return total


def _log_power_at_count(sc, count):
    lo, hi = -400.0, 200.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if sc.count_above(math.exp(mid)) > count:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def interference_curve(config: NetworkConfig, opts: SolverOptions = SolverOptions()):
    """lambda -> E[I] in watts (analytic, or Monte Carlo with the same seed at every density)."""
    cache = {}
    if opts.engine == "mc":
        def ev(lam):
            return mean_interference(config.with_(lam=lam), opts.trials, opts.seed, opts.threads).mean
    elif opts.engine == "analytic":
        sc = build_scenario(config)

        def ev(lam):
            return mean_interference_analytic(sc.at_density(lam))
    else:
        raise ValueError(f"unknown engine {opts.engine!r}")

    def f(lam):
        if lam not in cache:
            cache[lam] = ev(lam)
        return cache[lam]
    return f


def _find_level(config: NetworkConfig, target: float, opts: SolverOptions) -> Boundary:
    f = interference_curve(config, opts)
    lo, hi = (math.log10(b) for b in opts.bracket)
    g_lo, g_hi = f(10 ** lo) - target, f(10 ** hi) - target
    if not (g_lo < 0 < g_hi):
        raise BracketError(f"E[I] does not cross {target:.3e} W inside lambda in "
                           f"[{opts.bracket[0]:g}, {opts.bracket[1]:g}] "
                           f"(E[I] = {g_lo + target:.3e} .. {g_hi + target:.3e} W)")
    it = 0
    best = (abs(g_lo), lo) if abs(g_lo) < abs(g_hi) else (abs(g_hi), hi)
    converged = False
    while it < opts.max_iter:
        it += 1
        mid = 0.5 * (lo + hi)
        g = f(10 ** mid) - target
        if abs(g) < best[0]:
            best = (abs(g), mid)
        if abs(g) <= opts.rtol * target:
            converged = True
            break
        if g < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < opts.xtol:
            break
    lam = 10 ** best[1]
    val = f(lam)
    if not converged:
        log.warning("bisection stopped with |E[I]/target - 1| = %.3g", abs(val / target - 1))
    return Boundary(lam, target, val, it, (10 ** lo, 10 ** hi), converged)


def find_nlr_sdr(config: NetworkConfig, opts: SolverOptions = SolverOptions()) -> Boundary:
    """Density at which the mean interference equals the noise power."""
    validate(config)
    return _find_level(config, config.noise_w, opts)


def find_idr_ilr(config: NetworkConfig, epsilon: float = DEFAULT_EPSILON,
                 opts: SolverOptions = SolverOptions()) -> Boundary:
    """Density at which the mean interference is epsilon times the noise power."""
    if not epsilon >= 1:
        raise ValueError("epsilon must be >= 1")
    validate(config)
    return _find_level(config, epsilon * config.noise_w, opts)


@dataclass(frozen=True)
class Peak:
    lam: float
    p_c: float
    evaluations: int
    at_edge: bool


def coverage_curve(config: NetworkConfig, quad=None):
    """lambda -> analytic coverage, reusing one set of intensity tables."""
    sc = build_scenario(config)
    cache = {}

    def f(lam):
        if lam not in cache:
            cache[lam] = CoverageEngine(sc.at_density(lam), quad).coverage().p_c
        return cache[lam]
    return f


def find_sdr_idr(config: NetworkConfig, bracket=DEFAULT_BRACKET, xtol: float = 0.01,
                 p_c_fn=None) -> Peak:
    """Density maximising coverage, by golden-section search on log10(lambda).

    ``at_edge`` is set when the maximiser sits on the bracket boundary, i.e.
    there is no interior peak.
    """
    validate(config)
    f = p_c_fn or coverage_curve(config)
    lo, hi = (math.log10(b) for b in bracket)
    n = [0]

    def neg(z):
        n[0] += 1
        return -f(10 ** z)

    res = optimize.minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                                   options={"xatol": xtol, "maxiter": 200})
    z = float(res.x)
    pz = -float(res.fun)
    # the bounded search never evaluates the ends exactly, so compare against them
    edges = [(lo, f(10 ** lo)), (hi, f(10 ** hi))]
    at_edge = False
    for ze, pe in edges:
        if pe >= pz or abs(z - ze) < 2 * xtol:
            if pe >= pz:
                z, pz = ze, pe
            at_edge = True
    return Peak(10 ** z, pz, n[0] + 2, at_edge)


@dataclass
class RegimeReport:
    lambda_nlr_sdr: float
    lambda_sdr_idr: float
    lambda_idr_ilr: float
    epsilon: float
    p_c_max: float
    diagnostics: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)     # boundary name -> message

    @property
    def ordered(self) -> bool:
        return self.lambda_nlr_sdr < self.lambda_sdr_idr < self.lambda_idr_ilr

    def rows(self):
        d = self.diagnostics
        out = []
        for name, lam in (("nlr_sdr", self.lambda_nlr_sdr), ("sdr_idr", self.lambda_sdr_idr),
                          ("idr_ilr", self.lambda_idr_ilr)):
            b = d.get(name)
            if b is None:
                out.append((name, math.nan, math.nan, 0))
            elif isinstance(b, Peak):
                out.append((name, lam, math.nan, b.evaluations))
            else:
                out.append((name, lam, b.residual, b.iterations))
        return out


def regime_report(config: NetworkConfig, epsilon: float = DEFAULT_EPSILON,
                  opts: SolverOptions = SolverOptions(), p_c_fn=None) -> RegimeReport:
    """All three boundaries; a level that is not crossed in the bracket is recorded as NaN."""
    diag, fail = {}, {}
    for name, fn in (("nlr_sdr", lambda: find_nlr_sdr(config, opts)),
                     ("idr_ilr", lambda: find_idr_ilr(config, epsilon, opts))):
        try:
            diag[name] = fn()
        except BracketError as exc:
            fail[name] = str(exc)
            log.warning("%s: %s", name, exc)
    peak = find_sdr_idr(config, opts.bracket, p_c_fn=p_c_fn)
    diag["sdr_idr"] = peak
    if peak.at_edge:
        fail["sdr_idr"] = "coverage maximum lies on the bracket edge; no interior peak"
        log.warning(fail["sdr_idr"])
    lam = {k: diag[k].lam if k in diag else math.nan for k in ("nlr_sdr", "idr_ilr")}
    rep = RegimeReport(lam["nlr_sdr"], peak.lam, lam["idr_ilr"], epsilon, peak.p_c, diag, fail)
    if not rep.ordered:
        log.warning("regime boundaries are not ordered: %.3g, %.3g, %.3g",
                    rep.lambda_nlr_sdr, rep.lambda_sdr_idr, rep.lambda_idr_ilr)
    return rep
