"""Equivalent-distance transform, intensity measures and the strongest-power CDF.

A BS at distance R with gain H on branch U is mapped to the equivalent
distance t = R (B H)^(-1/alpha), whose received power is t^-alpha.  The mapped
points form a non-homogeneous PPP with measure Lambda^U([0, t]).

Each (piece, branch) pair is a ``Component``.  Measures are linear in the
density, so components are stored per unit density (BSs/m^2) and scaled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import integrate, interpolate, special

from . import channel
from .config import BRANCHES, L, NL, NegExp, NetworkConfig, Step, branch_mass
from .channel import NumericalError

SQRT_PI = math.sqrt(math.pi)

GENERIC = "GenericNumeric"
CF_LOGNORMAL = "ClosedFormLogNormal"
CF_NAKAGAMI = "ClosedFormNakagami"
CF_RAYLEIGH_NL = "ClosedFormRayleighNL"


def equivalent_distance(r, b, h, alpha):
    return np.asarray(r, dtype=float) * (np.asarray(b) * np.asarray(h)) ** (-1.0 / np.asarray(alpha))


# ------------------------------------------------------------------ closed forms
# All functions below return values per unit density; multiply by lambda (per m^2).

def _lognormal_consts(alpha, b, sigma_db, d, branch, printed=False):
    s = abs(channel.BETA) * sigma_db          # std of ln H
    v = (alpha * math.log(d) - math.log(b)) / (math.sqrt(2) * s)
    if branch == NL:
        m = -alpha / (math.sqrt(2) * s)
        q = v - 1.0 / m if printed else v + 1.0 / m
    else:
        m = alpha / (math.sqrt(2) * s)
        q = -v + 1.0 / m
    return m, q, v


def lognormal_measure(t, b, alpha, sigma_db, d, branch, printed=False):
    """Lambda^U([0,t]) / lambda for log-normal shadowing and a step LoS region of radius d.

    ``printed=True`` uses the NLoS constant with the opposite sign on 1/M,
    kept only so the tests can show it disagrees with the definition.
    """
    t = np.asarray(t, dtype=float)
    m, q, v = _lognormal_consts(alpha, b, sigma_db, d, branch, printed)
    with np.errstate(divide="ignore"):
        lt = np.log(t)
    k = b ** (2.0 / alpha) * math.exp(1.0 / m**2)
    first = 0.5 * math.pi * t**2 * k * special.erfc(m * lt + q)
    if branch == NL:
        out = first - 0.5 * math.pi * d**2 * special.erfc(m * lt + v)
    else:
        out = first + 0.5 * math.pi * d**2 * special.erfc(-m * lt + v)
    return np.where(t > 0, out, 0.0)


def lognormal_intensity(t, b, alpha, sigma_db, d, branch, printed=False):
    t = np.asarray(t, dtype=float)
    m, q, v = _lognormal_consts(alpha, b, sigma_db, d, branch, printed)
    # differentiating the measure also gives two Gaussian terms, one from each
    # erfc; with the correct constant they cancel identically, so only the first
    # term is kept (it stays nonnegative where the three-term sum loses digits)
    with np.errstate(divide="ignore", invalid="ignore"):
        lt = np.log(t)
        k = b ** (2.0 / alpha)
        out = math.pi * t * k * math.exp(1.0 / m**2) * special.erfc(m * lt + q)
        if printed:
            z2 = m * lt + v
            out = out + m * SQRT_PI * d**2 / t * np.exp(-z2**2)
            out = out - m * t * SQRT_PI * k * np.exp(1.0 / m**2 - (m * lt + q) ** 2)
    return np.where(t > 0, out, 0.0)


def _gamma_upper(s, x):
    return special.gamma(s) * special.gammaincc(s, x)


def _gamma_lower(s, x):
    return special.gamma(s) * special.gammainc(s, x)


def nakagami_measure(t, b, alpha, m, d, branch):
    t = np.asarray(t, dtype=float)
    s = 2.0 / alpha
    with np.errstate(divide="ignore", over="ignore"):
        x = m / b * (d / t) ** alpha
    g = special.gamma(m)
    lead = math.pi * t**2 * (b / m) ** s / g
    if branch == NL:
        out = -math.pi * d**2 / g * _gamma_upper(m, x) + lead * _gamma_upper(s + m, x)
    else:
        out = math.pi * d**2 / g * _gamma_upper(m, x) + lead * _gamma_lower(s + m, x)
    return np.where(t > 0, out, 0.0)


def nakagami_intensity(t, b, alpha, m, d, branch):
    t = np.asarray(t, dtype=float)
    s = 2.0 / alpha
    with np.errstate(divide="ignore", over="ignore"):
        x = m / b * (d / t) ** alpha
    lead = 2 * math.pi * t * (b / m) ** s / special.gamma(m)
    inc = _gamma_upper(s + m, x) if branch == NL else _gamma_lower(s + m, x)
    return np.where(t > 0, lead * inc, 0.0)


def rayleigh_nl_measure(t, b, alpha, d):
    t = np.asarray(t, dtype=float)
    s = 2.0 / alpha
    with np.errstate(divide="ignore", over="ignore"):
        x = (d / t) ** alpha / b
    out = math.pi * t**2 * b**s * _gamma_upper(s + 1.0, x) - math.pi * d**2 * np.exp(-x)
    return np.where(t > 0, out, 0.0)


def rayleigh_nl_intensity(t, b, alpha, d):
    t = np.asarray(t, dtype=float)
    s = 2.0 / alpha
    with np.errstate(divide="ignore", over="ignore"):
        x = (d / t) ** alpha / b
    return np.where(t > 0, 2 * math.pi * t * b**s * _gamma_upper(s + 1.0, x), 0.0)


# ------------------------------------------------------------------ generic numeric

_Q = 1e-15


def _piece_edges(cfg: NetworkConfig, n: int):
    e = cfg.pathloss.edges
    return e[n], e[n + 1]


def _branch_support(blk, branch, a, b):
    """Sub-interval of [a, b] on which p^U can be positive."""
    if isinstance(blk, Step):
        if branch == L:
            return a, min(b, blk.d)
        return max(a, blk.d), b
    return a, b


def _los_kinks(blockage, a, b):
    return [k for k in getattr(blockage, "kinks", ()) if a < k < b]


def measure_numeric_one(cfg: NetworkConfig, branch: str, n: int, t: float, epsrel=1e-11) -> float:
    """Lambda_n^U([0, t]) per unit density, straight from the definition.

    Uses E_H[int_a^{min(b, R(H))} p(r) r dr] = int_a^b p(r) r P[R(H) > r] dr
    with R(H) = t (B H)^(1/alpha), so the outer expectation only needs the
    survival function of H.
    """
    if t <= 0:
        return 0.0
    blk = cfg.blockage
    a, b = _branch_support(blk, branch, *_piece_edges(cfg, n))
    if b <= a:
        return 0.0
    alpha = cfg.alpha(branch, n)
    bc = cfg.b_const(branch, n)
    gain = cfg.gain(branch)
    two_pi = 2 * math.pi

    if isinstance(gain, channel.Deterministic):
        r_star = t * bc ** (1.0 / alpha)
        return float(two_pi * branch_mass(blk, branch, a, min(b, max(a, r_star))))

    sf = channel.sf_fn(gain)
    h_lo = channel.support_quantiles(gain, _Q)[0]
    r_lo = t * (bc * h_lo) ** (1.0 / alpha)
    total = 0.0
    # survival ~ 1 below r_lo
    if r_lo > a:
        total += two_pi * float(branch_mass(blk, branch, a, min(b, r_lo)))
    lo = max(a, r_lo)
    hi = min(b, _r_cut(gain, sf, t, bc, alpha, lo))
    if hi > lo:
        def f(z):
            r = math.exp(z)
            x = (r / t) ** alpha / bc
            pu = blk.p_los(r) if branch == L else 1.0 - blk.p_los(r)
            return two_pi * float(pu) * r * r * float(sf(x))

        edges = [math.log(lo), *[math.log(k) for k in _los_kinks(blk, lo, hi)], math.log(hi)]
        for z0, z1 in zip(edges[:-1], edges[1:]):
            val, err = integrate.quad(f, z0, z1, epsabs=0.0, epsrel=epsrel, limit=400)
            if err > 1e-7 * abs(val) and val > 1e-290:
                raise NumericalError(f"measure quadrature error {err:g} at t={t:g}")
            total += val
    return total


def _r_cut(gain, sf, t, bc, alpha, r0):
    """Radius beyond which the survival factor is negligible next to its value at r0."""
    s0 = float(sf((r0 / t) ** alpha / bc))
    q = max(s0 * 1e-18, 1e-305)
    if s0 <= 1e-305:
        return r0
    return t * (bc * channel.isf(gain, q)) ** (1.0 / alpha)


def intensity_numeric_one(cfg: NetworkConfig, branch: str, n: int, t: float, epsrel=1e-10) -> float:
    """d/dt Lambda_n^U([0,t]) per unit density, differentiating under the integral."""
    if t <= 0:
        return 0.0
    blk = cfg.blockage
    a, b = _branch_support(blk, branch, *_piece_edges(cfg, n))
    if b <= a:
        return 0.0
    alpha = cfg.alpha(branch, n)
    bc = cfg.b_const(branch, n)
    gain = cfg.gain(branch)

    if isinstance(gain, channel.Deterministic):
        r_star = t * bc ** (1.0 / alpha)
        if not (a < r_star <= b):
            return 0.0
        pu = blk.p_los(r_star) if branch == L else 1.0 - blk.p_los(r_star)
        return float(2 * math.pi * pu * r_star * bc ** (1.0 / alpha))

    sf = channel.sf_fn(gain)
    h_lo = channel.support_quantiles(gain, 1e-300)[0]
    lo = max(a, t * (bc * h_lo) ** (1.0 / alpha))
    hi = min(b, _r_cut(gain, sf, t, bc, alpha, lo))
    if hi <= lo:
        return 0.0
    pdf = _pdf_fn(gain)

    def f(z):
        r = math.exp(z)
        x = (r / t) ** alpha / bc
        pu = blk.p_los(r) if branch == L else 1.0 - blk.p_los(r)
        return 2 * math.pi * float(pu) * r * r * float(pdf(x)) * alpha * x / t

    edges = [math.log(lo), *[math.log(k) for k in _los_kinks(blk, lo, hi)], math.log(hi)]
    total = 0.0
    for z0, z1 in zip(edges[:-1], edges[1:]):
        val, err = integrate.quad(f, z0, z1, epsabs=0.0, epsrel=epsrel, limit=400)
        total += val
    return total


def _pdf_fn(gain):
    fr = channel.frozen(gain)
    if fr is None:
        return lambda h: channel.density(gain, h)
    g = channel._canonical(gain)
    if isinstance(g, channel.LogNormal):
        s = g.sigma_ln
        c = 1.0 / (s * math.sqrt(2 * math.pi))
        return lambda h: c / h * math.exp(-0.5 * (math.log(h) / s) ** 2)
    if isinstance(g, channel.Rayleigh):
        return lambda h: math.exp(-h)
    m = g.m
    lg = special.gammaln(m)
    return lambda h: math.exp(m * math.log(m) + (m - 1) * math.log(h) - m * h - lg) if h > 0 else 0.0


def intensity_measure_numeric(cfg: NetworkConfig, branch: str, t) -> np.ndarray:
    """Lambda^U([0,t]) summed over pieces, at the configured density."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0):
        raise ValueError("t must be non-negative")
    out = np.array([sum(measure_numeric_one(cfg, branch, n, tt) for n in range(cfg.pathloss.n))
                    for tt in t_arr]) * cfg.lambda_m2
    return out[0] if np.ndim(t) == 0 else out


def intensity_numeric(cfg: NetworkConfig, branch: str, t) -> np.ndarray:
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.array([sum(intensity_numeric_one(cfg, branch, n, tt) for n in range(cfg.pathloss.n))
                    for tt in t_arr]) * cfg.lambda_m2
    return out[0] if np.ndim(t) == 0 else out


class _LogLogTable:
    """Cubic spline of ln Lambda against ln t with power-law extrapolation."""

    def __init__(self, fn: Callable[[float], float], t_min: float, t_max: float, per_decade: int = 40):
        n = int(math.ceil(per_decade * math.log10(t_max / t_min))) + 1
        lt = np.linspace(math.log(t_min), math.log(t_max), n)
        vals = np.array([fn(math.exp(z)) for z in lt])
        keep = vals > 1e-280
        if keep.sum() < 4:
            raise NumericalError("measure table has too few positive entries")
        first = np.argmax(keep)
        lt, vals = lt[first:], vals[first:]
        if np.any(vals <= 0):
            raise NumericalError("measure table is not positive past its first entry")
        self.z = lt
        self.spline = interpolate.CubicSpline(lt, np.log(vals), bc_type="not-a-knot")
        self.d1 = self.spline.derivative()
        self.lo, self.hi = lt[0], lt[-1]
        self.slope_lo = float(self.d1(self.lo))
        self.slope_hi = float(self.d1(self.hi))
        self.v_lo = float(self.spline(self.lo))
        self.v_hi = float(self.spline(self.hi))

    def _lnval(self, z):
        return np.where(z < self.lo, self.v_lo + self.slope_lo * (z - self.lo),
                        np.where(z > self.hi, self.v_hi + self.slope_hi * (z - self.hi),
                                 self.spline(np.clip(z, self.lo, self.hi))))

    def _slope(self, z):
        return np.where(z < self.lo, self.slope_lo,
                        np.where(z > self.hi, self.slope_hi, self.d1(np.clip(z, self.lo, self.hi))))

    def measure(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            z = np.log(t)
        return np.where(t > 0, np.exp(self._lnval(z)), 0.0)

    def intensity(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.log(t)
            out = np.exp(self._lnval(z)) * self._slope(z) / t
        return np.where(t > 0, np.maximum(out, 0.0), 0.0)


# ------------------------------------------------------------------ scenario types

@dataclass(frozen=True)
class Component:
    """One (piece, branch) part of the mapped process, stored per unit density."""

    branch: str
    piece: int
    alpha: float
    measure_unit: Callable
    intensity_unit: Callable


@dataclass(frozen=True)
class IntensityPair:
    branch: str
    measure: Callable
    intensity: Callable


@dataclass(frozen=True)
class EquivalentScenario:
    config: NetworkConfig
    components: tuple
    backend: str
    lam_m2: float = field(default=0.0)

    def __post_init__(self):
        if self.lam_m2 <= 0:
            object.__setattr__(self, "lam_m2", self.config.lambda_m2)

    def at_density(self, lam_km2: float) -> "EquivalentScenario":
        """Same scenario at another density; the unit-density tables are reused."""
        cfg = self.config.with_(lam=lam_km2)
        return replace(self, config=cfg, lam_m2=cfg.lambda_m2)

    def measure(self, k: int, t):
        return self.lam_m2 * self.components[k].measure_unit(t)

    def intensity(self, k: int, t):
        return self.lam_m2 * self.components[k].intensity_unit(t)

    def _branch_sum(self, branch, fn_name, t):
        out = 0.0
        for k, c in enumerate(self.components):
            if c.branch == branch:
                out = out + getattr(self, fn_name)(k, t)
        return out

    def pair(self, branch) -> IntensityPair:
        return IntensityPair(branch,
                             lambda t, b=branch: self._branch_sum(b, "measure", t),
                             lambda t, b=branch: self._branch_sum(b, "intensity", t))

    @property
    def pair_nl(self) -> IntensityPair:
        return self.pair(NL)

    @property
    def pair_l(self) -> IntensityPair:
        return self.pair(L)

    @property
    def alpha_nl(self) -> float:
        return self.config.alpha(NL, 0)

    @property
    def alpha_l(self) -> float:
        return self.config.alpha(L, 0)

    def count_above(self, p):
        """Expected number of BSs whose received power is >= p (watts)."""
        p = np.asarray(p, dtype=float)
        out = np.zeros_like(p)
        for k, c in enumerate(self.components):
            out = out + self.measure(k, p ** (-1.0 / c.alpha))
        return out

    def serving_density_logp(self, k: int, p):
        """-d/d(ln p) of Lambda_k at power p: density of component-k powers per unit ln p."""
        p = np.asarray(p, dtype=float)
        c = self.components[k]
        t = p ** (-1.0 / c.alpha)
        return self.intensity(k, t) * t / c.alpha

    def strongest_power_cdf(self, gamma):
        return strongest_power_cdf(self, gamma)


def strongest_power_cdf(scenario: EquivalentScenario, gamma):
    """P[max received power <= gamma]."""
    g = np.asarray(gamma, dtype=float)
    if np.any(g <= 0):
        raise ValueError("gamma must be positive")
    out = np.exp(-scenario.count_above(g))
    return float(out) if out.ndim == 0 else out


def strongest_power_quantile(scenario: EquivalentScenario, q: float) -> float:
    """Power gamma with P[max power <= gamma] = q, by bisection on ln gamma."""
    target = -math.log(q)             # count_above(gamma) == target
    lo, hi = -300.0, 50.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if scenario.count_above(math.exp(mid)) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return math.exp(0.5 * (lo + hi))


# ------------------------------------------------------------------ backends

def _single_slope_step(cfg) -> bool:
    return cfg.pathloss.n == 1 and isinstance(cfg.blockage, Step)


def _as_m(g):
    if isinstance(g, channel.Rayleigh):
        return 1.0
    if isinstance(g, channel.NakagamiM):
        return g.m
    if isinstance(g, channel.RicianApprox):
        return g.m
    return None


def pick_backend(cfg: NetworkConfig) -> str:
    if not _single_slope_step(cfg) or cfg.blockage.d <= 0:
        return GENERIC
    g_nl, g_l = cfg.gain_nl, cfg.gain_l
    if isinstance(g_nl, channel.LogNormal) and isinstance(g_l, channel.LogNormal):
        return CF_LOGNORMAL
    if _as_m(g_nl) is not None and _as_m(g_l) is not None:
        return CF_NAKAGAMI
    return GENERIC


def _require_closed(cfg, what):
    if not _single_slope_step(cfg):
        raise ValueError(f"{what} needs a single-slope path loss and step blockage")
    if cfg.blockage.d <= 0:
        raise ValueError(f"{what} needs a positive LoS radius")


def closed_form_lognormal(cfg: NetworkConfig) -> EquivalentScenario:
    _require_closed(cfg, "log-normal closed form")
    if not (isinstance(cfg.gain_nl, channel.LogNormal) and isinstance(cfg.gain_l, channel.LogNormal)):
        raise ValueError("log-normal closed form needs log-normal gains on both branches")
    d = cfg.blockage.d
    comps = []
    for br in BRANCHES:
        args = (cfg.b_const(br), cfg.alpha(br), cfg.gain(br).sigma_db, d, br)
        comps.append(Component(br, 0, cfg.alpha(br),
                               lambda t, a=args: lognormal_measure(t, *a),
                               lambda t, a=args: lognormal_intensity(t, *a)))
    return EquivalentScenario(cfg, tuple(comps), CF_LOGNORMAL)


def _nakagami_component(cfg, br, m):
    args = (cfg.b_const(br), cfg.alpha(br), m, cfg.blockage.d, br)
    return Component(br, 0, cfg.alpha(br),
                     lambda t, a=args: nakagami_measure(t, *a),
                     lambda t, a=args: nakagami_intensity(t, *a))


def closed_form_nakagami(cfg: NetworkConfig) -> EquivalentScenario:
    _require_closed(cfg, "Nakagami closed form")
    m_nl, m_l = _as_m(cfg.gain_nl), _as_m(cfg.gain_l)
    if m_nl is None or m_l is None:
        raise ValueError("Nakagami closed form needs Nakagami, Rician or Rayleigh gains")
    comps = (_nakagami_component(cfg, NL, m_nl), _nakagami_component(cfg, L, m_l))
    return EquivalentScenario(cfg, comps, CF_NAKAGAMI)


def closed_form_rayleigh_nl(cfg: NetworkConfig) -> IntensityPair:
    """NLoS pair for Rayleigh fading; scaled to the configured density."""
    _require_closed(cfg, "Rayleigh closed form")
    if not isinstance(cfg.gain_nl, channel.Rayleigh):
        raise ValueError("Rayleigh closed form needs Rayleigh NLoS fading")
    b, a, d, lam = cfg.b_const(NL), cfg.alpha(NL), cfg.blockage.d, cfg.lambda_m2
    return IntensityPair(NL, lambda t: lam * rayleigh_nl_measure(t, b, a, d),
                         lambda t: lam * rayleigh_nl_intensity(t, b, a, d))


def rayleigh_rician_scenario(cfg: NetworkConfig) -> EquivalentScenario:
    """Rayleigh NLoS with the Rayleigh closed form, Nakagami-matched LoS."""
    _require_closed(cfg, "Rayleigh closed form")
    m_l = _as_m(cfg.gain_l)
    if not isinstance(cfg.gain_nl, channel.Rayleigh) or m_l is None:
        raise ValueError("needs Rayleigh NLoS and Nakagami/Rician LoS")
    b, a, d = cfg.b_const(NL), cfg.alpha(NL), cfg.blockage.d
    nl = Component(NL, 0, a, lambda t: rayleigh_nl_measure(t, b, a, d),
                   lambda t: rayleigh_nl_intensity(t, b, a, d))
    return EquivalentScenario(cfg, (nl, _nakagami_component(cfg, L, m_l)), CF_RAYLEIGH_NL)


def _table_range(cfg, br, n):
    # equivalent distances of interest: 1 mm .. far beyond any simulated window
    bc = cfg.b_const(br, n)
    scale = bc ** (-1.0 / cfg.alpha(br, n))
    return 1e-4 * scale, 1e8 * scale


def generic_numeric(cfg: NetworkConfig, per_decade: int = 40) -> EquivalentScenario:
    """Tabulated generic backend built from the definition (any model)."""
    comps = []
    for n in range(cfg.pathloss.n):
        for br in BRANCHES:
            lo, hi = _branch_support(cfg.blockage, br, *_piece_edges(cfg, n))
            t0, t1 = _table_range(cfg, br, n)
            if hi <= lo or measure_numeric_one(cfg, br, n, t1) <= 0:
                # no BS of this branch in this piece (within any reachable range)
                continue
            tab = _LogLogTable(lambda t, b=br, nn=n: measure_numeric_one(cfg, b, nn, t),
                               t0, t1, per_decade)
            comps.append(Component(br, n, cfg.alpha(br, n), tab.measure, tab.intensity))
    if not comps:
        raise ValueError("no branch carries any BS")
    return EquivalentScenario(cfg, tuple(comps), GENERIC)


def build_scenario(cfg: NetworkConfig, backend: str = "auto") -> EquivalentScenario:
    if backend == "auto":
        backend = pick_backend(cfg)
        if backend == CF_NAKAGAMI and isinstance(cfg.gain_nl, channel.Rayleigh) \
                and _as_m(cfg.gain_l) != 1.0:
            backend = CF_RAYLEIGH_NL
    if backend == CF_LOGNORMAL:
        return closed_form_lognormal(cfg)
    if backend == CF_NAKAGAMI:
        return closed_form_nakagami(cfg)
    if backend == CF_RAYLEIGH_NL:
        return rayleigh_rician_scenario(cfg)
    if backend == GENERIC:
        return generic_numeric(cfg)
    raise ValueError(f"unknown backend {backend!r}")
