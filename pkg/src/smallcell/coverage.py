"""Coverage probability, its asymptotic limits and the ASE upper bound.

The engine works in the received-power domain.  With M(p) the expected number
of BSs received with power >= p, the strongest power has CDF exp(-M(p)).  Given
the serving power p, interferers form a PPP on (0, p), so the relative
interference X = I/p is compound Poisson with jump tail N(v) = M(vp) - M(p),
v in (0, 1], and

    E[exp(-s X)] = exp(K(s)),   K(s) = -s int_0^1 exp(-s v) N(v) dv.

Coverage is P[X < 1/T - eta/p] averaged over the serving power.  The CDF of X
comes from the Bromwich integral of exp(K(s))/s, discretised with the
trapezoid rule and summed with Euler acceleration (Abate-Whitt).  The serving
power is integrated in ln p with adaptive Gauss-Kronrod.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from .channel import NumericalError
from .config import NL, NetworkConfig, validate
from .equivalence import EquivalentScenario, build_scenario

log = logging.getLogger(__name__)

U_MAX = 40.0          # v integrals run down to v = exp(-U_MAX), power-law tail below
_GL8 = leggauss(8)


@dataclass(frozen=True)
class QuadratureSpec:
    omega_max: float = 1e6          # hard cap on the Bromwich frequency
    omega_points: int = 50          # initial trapezoid terms, doubled until Euler sums settle
    y_grid: int = 16                # initial panels over ln(serving power)
    t_tail: float = 1e-10           # serving-power probability dropped at either end
    target_abs_tol: float = 1e-4

    def __post_init__(self):
        errs = []
        if not self.omega_max > 0:
            errs.append("omega_max must be positive")
        if not 0 < self.target_abs_tol <= 0.01:
            errs.append("target_abs_tol must be in (0, 0.01]")
        if self.omega_points < 16 or self.y_grid < 16:
            errs.append("node counts must be >= 16")
        if not 0 < self.t_tail < 1e-3:
            errs.append("t_tail must be in (0, 1e-3)")
        if errs:
            raise ValueError("; ".join(errs))


@dataclass
class CoverageResult:
    p_c: float
    p_c_nl: float
    p_c_l: float
    per_component: dict = field(default_factory=dict)   # (branch, piece) -> value
    error: float = 0.0
    flagged: bool = False
    message: str = ""


# ------------------------------------------------------------------ v-domain nodes

_node_cache: dict = {}


def _unodes(rate: float, vmax: float = 1.0):
    """Gauss-Legendre nodes in u = -ln v able to resolve exp(-s v) for |s| <= rate.

    Covers v in [v_low, vmax].  Returns (v, w, v_low) such that
    int_{v_low}^{vmax} g(v) dv ~ sum w g(v), with |s| v_low negligible.
    """
    bucket = max(1, int(2 ** math.ceil(math.log2(max(rate, 1.0)))))
    u0 = max(0.0, math.floor(-math.log(vmax)))
    key = (bucket, u0)
    hit = _node_cache.get(key)
    if hit is not None:
        return hit
    u_max = max(U_MAX, math.log(bucket) + 25.0)
    x, wx = _GL8
    us, ws = [], []
    u = u0
    while u < u_max:
        width = min(0.5, 3.0 / (bucket * math.exp(-u)), u_max - u)
        us.append(u + 0.5 * width * (x + 1.0))
        ws.append(0.5 * width * wx)
        u += width
    u = np.concatenate(us)
    v = np.exp(-u)
    w = np.concatenate(ws) * v
    hit = (v, w, math.exp(-u_max))
    _node_cache[key] = hit
    return hit


class _Kernel:
    """Jump tail N(v) of the relative interference for one serving power."""

    def __init__(self, sc: EquivalentScenario, p: float):
        self.sc = sc
        self.p = p
        self.m_p = float(sc.count_above(p))
        self._n = {}
        k0, self.mean, self.var = self.cgf(0.0)

    def n_of(self, v):
        return np.maximum(self.sc.count_above(v * self.p) - self.m_p, 0.0)

    def nodes(self, rate, vmax=1.0):
        v, w, vu = _unodes(rate, vmax)
        hit = self._n.get(id(v))
        if hit is None:
            wn = w * self.n_of(v)
            # power-law tail N(v) ~ a v^-delta below vu
            n1 = self.n_of(np.array([vu, vu * math.e]))
            if n1[1] > 0:
                delta = float(np.clip(math.log(n1[0] / n1[1]), 1e-6, 0.999999))
            else:
                delta = 0.5
            hit = (v, wn, vu, float(n1[0]) * vu ** delta, delta)
            self._n[id(v)] = hit
        return hit

    @staticmethod
    def _tail(a, delta, vu, g0, g1):
        # int_0^vu (g0 + g1 v) a v^-delta dv
        return a * vu ** (1 - delta) * (g0 / (1 - delta) + g1 * vu / (2 - delta))

    def cgf(self, tau):
        """Cumulant generating function of X and its first two derivatives at real tau."""
        v, wn, vu, a, d = self.nodes(abs(tau))
        e = np.exp(tau * v)
        k0 = tau * (float(np.dot(wn, e)) + self._tail(a, d, vu, 1.0, tau))
        k1 = float(np.dot(wn, (1 + tau * v) * e)) + self._tail(a, d, vu, 1.0, 2 * tau)
        k2 = float(np.dot(wn, (2 * v + tau * v * v) * e)) + self._tail(a, d, vu, 0.0, 2.0)
        return k0, k1, k2

    def log_laplace(self, s):
        """K(s) = ln E[exp(-s X)] for an array of complex s."""
        s = np.asarray(s, dtype=complex)
        if not s.size:
            return s
        # exp(-Re(s) v) is negligible past v = 60 / Re(s)
        re_min = float(np.min(s.real))
        vmax = min(1.0, 60.0 / re_min) if re_min > 0 else 1.0
        v, wn, vu, a, d = self.nodes(float(np.max(np.abs(s))), vmax)
        integral = np.exp(-np.outer(s, v)) @ wn + self._tail(a, d, vu, 1.0, -s)
        return -s * integral

    def log_laplace_line(self, c, step, n):
        """K(c + j k step) for k = 0..n-1, using powers of exp(-j step v)."""
        k = np.arange(n)
        s = c + 1j * step * k
        vmax = min(1.0, 60.0 / c) if c > 0 else 1.0
        v, wn, vu, a, d = self.nodes(float(abs(s[-1])), vmax)
        rot = np.exp(-1j * step * v)
        rows = np.empty((n, v.size), dtype=complex)
        rows[0] = wn * np.exp(-c * v)
        for i in range(1, n):
            np.multiply(rows[i - 1], rot, out=rows[i])
        integral = rows.sum(axis=1) + self._tail(a, d, vu, 1.0, -s)
        return -s * integral


_EULER_A = 18.4       # discretisation error ~ exp(-A)


def cdf_relative_interference(ker: _Kernel, x: float, quad: QuadratureSpec = QuadratureSpec()):
    """P[X <= x] for the relative interference of ``ker``; returns (value, ok).

    Trapezoid rule for the Bromwich integral on Re(s) = A / 2x with step pi/x,
    which turns the sum into an alternating series, accelerated by binomial
    (Euler) averaging of the partial sums.
    """
    if x <= 0:
        return 0.0, True
    m = 11
    n = quad.omega_points - m - 1
    tol = quad.target_abs_tol * 1e-2
    while True:
        k = np.arange(n + m + 1)
        s = (_EULER_A + 2j * math.pi * k) / (2.0 * x)
        f = np.exp(ker.log_laplace_line(s[0].real, math.pi / x, k.size)) / s
        terms = np.real(f) * np.where(k % 2 == 0, 1.0, -1.0)
        terms[0] *= 0.5
        partial = np.cumsum(terms) * math.exp(_EULER_A / 2) / x
        binom = np.array([math.comb(m, j) for j in range(m + 1)]) / 2.0**m
        est = float(np.dot(binom, partial[n:n + m + 1]))
        prev = float(np.dot(binom, partial[n - 1:n + m]))
        err = abs(est - prev)
        if err < tol:
            return float(min(max(est, 0.0), 1.0)), True
        if (n + m) * math.pi / x > quad.omega_max:
            return float(min(max(est, 0.0), 1.0)), False
        n *= 2


# ------------------------------------------------------------------ engine

class CoverageEngine:
    """Coverage evaluator for one scenario; caches per-serving-power kernels."""

    def __init__(self, scenario: EquivalentScenario, quad: QuadratureSpec | None = None):
        self.sc = scenario
        self.cfg = scenario.config
        self.quad = quad or QuadratureSpec()
        self._kernels: dict = {}
        self.failures = 0

    max_kernels = 4000

    def kernel(self, p: float) -> _Kernel:
        ker = self._kernels.get(p)
        if ker is None:
            if len(self._kernels) >= self.max_kernels:
                self._kernels.clear()
            ker = _Kernel(self.sc, p)
            self._kernels[p] = ker
        return ker

    def power_of_g(self, g):
        """Serving power at which the strongest-power CDF equals g (vectorised bisection)."""
        g = np.atleast_1d(np.asarray(g, dtype=float))
        target = -np.log(g)
        lo = np.full(g.shape, -400.0)
        hi = np.full(g.shape, 100.0)
        for _ in range(90):
            mid = 0.5 * (lo + hi)
            above = self.sc.count_above(np.exp(mid)) > target
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        return np.exp(0.5 * (lo + hi))

    def _power_at_count(self, count):
        return float(self.power_of_g(math.exp(-count))[0])

    def _weights(self, p):
        s = np.array([self.sc.serving_density_logp(k, p) for k in range(len(self.sc.components))])
        tot = s.sum()
        return s / tot if tot > 0 else np.full(len(s), 1.0 / len(s))

    def _at_power(self, p, x):
        if x <= 0:
            return np.zeros(len(self.sc.components))
        f, ok = cdf_relative_interference(self.kernel(p), x, self.quad)
        if not ok:
            self.failures += 1
        return f * self._weights(p)

    def _integrand(self, z, threshold, noise):
        # variable z = ln p; weight is the density of the strongest power per unit ln p
        p = math.exp(z)
        dens = np.array([float(self.sc.serving_density_logp(k, p)) for k in range(len(self.sc.components))])
        tot = dens.sum()
        x = 1.0 / threshold - noise / p
        if x <= 0 or tot <= 0:
            return np.zeros(len(dens))
        f, ok = cdf_relative_interference(self.kernel(p), x, self.quad)
        if not ok:
            self.failures += 1
        return f * dens * math.exp(-float(self.sc.count_above(p)))

    def _integrand_lnx(self, q, threshold, noise):
        # variable q = ln x near the noise floor, where x = 1/T - eta/p
        x = math.exp(q)
        p = noise / (1.0 / threshold - x)
        dens = sum(float(self.sc.serving_density_logp(k, p)) for k in range(len(self.sc.components)))
        dg = math.exp(-float(self.sc.count_above(p))) * dens * x / (1.0 / threshold - x)
        return self._at_power(p, x) * dg

    def coverage(self, threshold: float | None = None, noise: float | None = None) -> CoverageResult:
        cfg = self.cfg
        t_lin = cfg.threshold if threshold is None else threshold
        eta = cfg.noise if noise is None else noise
        if t_lin <= 0:
            raise ValueError("threshold must be positive")
        self.failures = 0
        tol = self.quad.target_abs_tol
        opts = dict(epsabs=tol / 8, epsrel=1e-6, norm="max", limit=200, quadrature="gk21")
        val = np.zeros(len(self.sc.components))
        err = 0.0
        # serving powers outside [p_lo, p_hi] carry < 2 t_tail probability
        p_lo = self._power_at_count(-math.log(self.quad.t_tail))
        p_hi = self._power_at_count(self.quad.t_tail)
        if eta > 0:
            # no coverage while the serving power is below eta*T; just above it the
            # CDF of X rises steeply in x, so that stretch is integrated over ln x
            p_split = 2.0 * eta * t_lin
            if p_split > p_lo:
                q_hi = math.log(0.5 / t_lin)
                q_lo = q_hi - 40.0
                v1, e1 = integrate.quad_vec(self._integrand_lnx, q_lo, q_hi, args=(t_lin, eta), **opts)
                val = val + v1
                err += e1
            p_lo = max(p_lo, p_split)
        if p_lo < p_hi:
            z0, z1 = math.log(p_lo), math.log(p_hi)
            pts = np.linspace(z0, z1, self.quad.y_grid + 1)[1:-1]
            v2, e2 = integrate.quad_vec(self._integrand, z0, z1, args=(t_lin, eta),
                                        points=pts, **opts)
            val = val + v2
            err += e2
        per = {}
        pc_nl = pc_l = 0.0
        for k, c in enumerate(self.sc.components):
            per[(c.branch, c.piece)] = float(val[k])
            if c.branch == NL:
                pc_nl += float(val[k])
            else:
                pc_l += float(val[k])
        pc = pc_nl + pc_l
        flagged = self.failures > 0 or err > tol or not (-tol <= pc <= 1 + tol)
        msg = ""
        if flagged:
            msg = f"tolerance not met (err={err:.2e}, inversion failures={self.failures})"
            log.warning(msg)
        return CoverageResult(pc, pc_nl, pc_l, per, float(err), flagged, msg)


def coverage_probability(config: NetworkConfig, quad: QuadratureSpec | None = None,
                         scenario: EquivalentScenario | None = None) -> CoverageResult:
    """Coverage probability P[SINR > T] (or SIR, per ``config.metric``)."""
    validate(config)
    for piece in config.pathloss.pieces:
        if min(piece.alpha_nl, piece.alpha_l) <= 2:
            raise ValueError("path-loss exponents must exceed 2 for finite interference")
    sc = scenario if scenario is not None else build_scenario(config)
    if sc.config is not config:
        sc = sc.at_density(config.lam)
        sc = EquivalentScenario(config, sc.components, sc.backend, config.lambda_m2)
    return CoverageEngine(sc, quad).coverage()


def charfunc_inv_sinr(scenario: EquivalentScenario, y: float, branch: str, omega, piece: int = 0):
    """E[exp(j omega / SINR)] given a serving BS at equivalent distance y on ``branch``."""
    if not y > 0:
        raise ValueError("y must be positive")
    cfg = scenario.config
    alpha_s = cfg.alpha(branch, piece)
    p = y ** (-alpha_s)
    om = np.atleast_1d(np.asarray(omega, dtype=float))
    ker = _Kernel(scenario, p)
    out = np.exp(1j * om * cfg.noise / p + ker.log_laplace(-1j * om))
    out[om == 0] = 1.0 + 0j
    return out[0] if np.ndim(omega) == 0 else out


def cdf_relative_interference_fourier(ker: _Kernel, x: float, omega_max: float = 2e3) -> float:
    """Real-line inversion with the (1 - e^{-j w x}) / (j w) kernel, for cross-checks."""
    def integrand(w):
        if w == 0:
            return x / (2 * math.pi)
        phi = np.exp(ker.log_laplace(np.array([-1j * w])))[0]
        return float(np.real((1 - np.exp(-1j * w * x)) / (1j * w) * phi)) / math.pi

    val, _ = integrate.quad(integrand, 0.0, omega_max, limit=4000, epsabs=1e-9)
    # integrand gives P[X < x] - P[X < 0] + boundary terms: for X >= 0 this is F(x)
    return val


# ------------------------------------------------------------------ limits and ASE

def asymptotic_coverage(alpha_l: float, t_lin: float) -> float:
    """Limit of the SIR coverage as the density grows without bound (requires T >= 1)."""
    if t_lin < 1:
        raise ValueError("asymptotic result holds for T >= 1 only")
    if alpha_l <= 2:
        raise ValueError("alpha_l must exceed 2")
    return alpha_l * math.sin(2 * math.pi / alpha_l) / (2 * math.pi * t_lin ** (2.0 / alpha_l))


def asymptotic_coverage_multislope(config: NetworkConfig, t_lin: float) -> float:
    alphas = [p.alpha_l for p in config.pathloss.pieces]
    if any(b < a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("LoS exponents must be nondecreasing across pieces")
    return asymptotic_coverage(alphas[0], t_lin)


def ase_upper_bound(config: NetworkConfig, quad: QuadratureSpec | None = None, p_c_fn=None,
                    z_lo: float = -18.0, rel_cut: float = 1e-8, width: float = 8.0) -> float:
    """(lambda / ln 2) int_0^inf p_c(lambda, u) / (1 + u) du in bps/Hz/km^2.

    ``p_c_fn(u)`` overrides the coverage evaluator (u is a linear threshold).
    The integral runs in z = ln u; below exp(z_lo) coverage is taken as 1.
    """
    if p_c_fn is None:
        engine = CoverageEngine(build_scenario(config), quad)
        p_c_fn = lambda u: engine.coverage(threshold=u).p_c

    def f(z):
        u = math.exp(z)
        return p_c_fn(u) * u / (1.0 + u)

    x, wx = _GL8
    total = math.log1p(math.exp(z_lo))
    z = z_lo
    while True:
        zs = z + 0.5 * width * (x + 1.0)
        vals = np.array([f(zz) for zz in zs])
        part = 0.5 * width * float(np.dot(wx, vals))
        total += part
        z += width
        if part < rel_cut * total and vals[-1] < rel_cut * total:
            break
        if z > 120:
            raise NumericalError("ASE integral did not reach its tail cut")
    return config.lam / math.log(2.0) * total
