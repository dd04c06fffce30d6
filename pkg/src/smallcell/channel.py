"""Channel power-gain laws: log-normal shadowing and multi-path fading.

Every law describes a *power* gain that multiplies the received power
``B * r**-alpha``.  Shadowing follows ``H = exp(beta * xi)`` with
``xi ~ N(0, sigma_db**2)`` and ``beta = -ln(10)/10``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special, stats

BETA = -math.log(10.0) / 10.0

SHADOWING = "shadowing"
FADING = "fading"
BOTH = "both"


class NumericalError(RuntimeError):
    """Raised when a quadrature or root search fails to reach its tolerance."""


@dataclass(frozen=True)
class Deterministic:
    """No randomness, H == 1."""

    kind = "deterministic"
    role = BOTH


@dataclass(frozen=True)
class LogNormal:
    sigma_db: float
    kind = "lognormal"
    role = SHADOWING

    @property
    def sigma_ln(self) -> float:
        """Standard deviation of ln H."""
        return abs(BETA) * self.sigma_db


@dataclass(frozen=True)
class Rayleigh:
    """Unit-mean exponential power gain."""

    kind = "rayleigh"
    role = FADING


@dataclass(frozen=True)
class NakagamiM:
    m: float
    kind = "nakagami"
    role = FADING


@dataclass(frozen=True)
class RicianApprox:
    """Rician fading through its Nakagami-m match, m = (K+1)^2 / (2K+1)."""

    k_db: float
    kind = "rician"
    role = FADING

    @property
    def k_linear(self) -> float:
        return 10.0 ** (self.k_db / 10.0)

    @property
    def m(self) -> float:
        k = self.k_linear
        return (k + 1.0) ** 2 / (2.0 * k + 1.0)

    def as_nakagami(self) -> NakagamiM:
        return NakagamiM(self.m)


@dataclass(frozen=True)
class CompositeRayleighLogNormal:
    """Product of an Exp(1) fading gain and a log-normal factor.

    ``mu_s`` and ``sigma_s`` are the mean and standard deviation of the
    natural log of the shadowing factor.
    """

    mu_s: float
    sigma_s: float
    kind = "composite"
    role = BOTH


GainDistribution = (
    Deterministic | LogNormal | Rayleigh | NakagamiM | RicianApprox | CompositeRayleighLogNormal
)

KINDS = {
    "deterministic": Deterministic,
    "lognormal": LogNormal,
    "rayleigh": Rayleigh,
    "nakagami": NakagamiM,
    "rician": RicianApprox,
    "composite": CompositeRayleighLogNormal,
}


def check(dist) -> list[str]:
    """Return a list of problems with the distribution parameters."""
    errors = []
    if isinstance(dist, LogNormal):
        if not (math.isfinite(dist.sigma_db) and dist.sigma_db > 0):
            errors.append("sigma_db must be positive")
    elif isinstance(dist, NakagamiM):
        if not (math.isfinite(dist.m) and dist.m >= 0.5):
            errors.append("nakagami m must be >= 0.5")
    elif isinstance(dist, RicianApprox):
        if not math.isfinite(dist.k_db):
            errors.append("k_db must be finite")
    elif isinstance(dist, CompositeRayleighLogNormal):
        if not math.isfinite(dist.mu_s):
            errors.append("mu_s must be finite")
        if not (math.isfinite(dist.sigma_s) and dist.sigma_s > 0):
            errors.append("sigma_s must be positive")
    elif not isinstance(dist, (Deterministic, Rayleigh)):
        errors.append(f"unknown gain distribution {dist!r}")
    return errors


def _canonical(dist):
    if isinstance(dist, RicianApprox):
        return dist.as_nakagami()
    return dist


def frozen(dist):
    """scipy.stats frozen distribution for the law, or None if there is none."""
    dist = _canonical(dist)
    if isinstance(dist, LogNormal):
        return stats.lognorm(s=dist.sigma_ln, scale=1.0)
    if isinstance(dist, Rayleigh):
        return stats.expon()
    if isinstance(dist, NakagamiM):
        return stats.gamma(a=dist.m, scale=1.0 / dist.m)
    return None


def sample(dist, rng: np.random.Generator, size=None):
    """Draw power gains from ``dist`` using the stream ``rng``."""
    dist = _canonical(dist)
    if isinstance(dist, Deterministic):
        return 1.0 if size is None else np.ones(size)
    if isinstance(dist, LogNormal):
        return np.exp(BETA * rng.normal(0.0, dist.sigma_db, size))
    if isinstance(dist, Rayleigh):
        return rng.exponential(1.0, size)
    if isinstance(dist, NakagamiM):
        return rng.gamma(dist.m, 1.0 / dist.m, size)
    if isinstance(dist, CompositeRayleighLogNormal):
        return rng.exponential(1.0, size) * np.exp(rng.normal(dist.mu_s, dist.sigma_s, size))
    raise TypeError(f"cannot sample {dist!r}")


def _composite_kernel(z, h, mu, sigma):
    # density of H = G*X written over z = ln x
    return np.exp(-0.5 * ((z - mu) / sigma) ** 2 - z - h * np.exp(-z)) / (sigma * math.sqrt(2 * math.pi))


def _composite_pdf(h: float, mu: float, sigma: float) -> float:
    lo, hi = mu - 14.0 * sigma, mu + 14.0 * sigma
    # the e^{-h e^{-z}} factor switches on around z = ln h
    pts = sorted({min(max(math.log(h), lo), hi), mu})
    edges = [lo, *pts, hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        val, err = integrate.quad(_composite_kernel, a, b, args=(h, mu, sigma),
                                  epsabs=0.0, epsrel=1e-10, limit=200)
        total += val
    return total


def density(dist, h):
    """Probability density of the power gain at ``h > 0``."""
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr <= 0):
        raise ValueError("density is defined for h > 0 only")
    dist = _canonical(dist)
    if isinstance(dist, Deterministic):
        raise ValueError("deterministic gain has no density")
    fr = frozen(dist)
    if fr is not None:
        out = fr.pdf(h_arr)
    else:
        out = np.vectorize(lambda x: _composite_pdf(x, dist.mu_s, dist.sigma_s))(h_arr)
    return float(out) if np.ndim(out) == 0 else out


def sf(dist, h):
    """Survival function P[H > h]."""
    dist = _canonical(dist)
    h_arr = np.asarray(h, dtype=float)
    if isinstance(dist, Deterministic):
        out = (h_arr < 1.0).astype(float)
    elif (fr := frozen(dist)) is not None:
        out = fr.sf(h_arr)
    else:
        mu, s = dist.mu_s, dist.sigma_s

        def one(x):
            if x <= 0:
                return 1.0
            f = lambda z: stats.norm.pdf(z, mu, s) * math.exp(-x * math.exp(-z))
            return integrate.quad(f, mu - 14 * s, mu + 14 * s, epsabs=0, epsrel=1e-10, limit=200,
                                  points=[min(max(math.log(x), mu - 14 * s), mu + 14 * s)])[0]

        out = np.vectorize(one)(h_arr)
    return float(out) if np.ndim(out) == 0 else out


def sf_fn(dist):
    """Fast scalar/array survival function built on scipy.special (None for composite)."""
    dist = _canonical(dist)
    if isinstance(dist, LogNormal):
        k = 1.0 / (math.sqrt(2.0) * dist.sigma_ln)

        def f(h):
            with np.errstate(divide="ignore"):
                return 0.5 * special.erfc(np.log(h) * k)
        return f
    if isinstance(dist, Rayleigh):
        return lambda h: np.exp(-np.asarray(h, dtype=float))
    if isinstance(dist, NakagamiM):
        m = dist.m
        return lambda h: special.gammaincc(m, m * np.asarray(h, dtype=float))
    return lambda h: sf(dist, h)


def isf(dist, q: float) -> float:
    """Gain value whose survival probability is q."""
    dist = _canonical(dist)
    if isinstance(dist, LogNormal):
        return math.exp(math.sqrt(2.0) * dist.sigma_ln * special.erfcinv(2.0 * q))
    if isinstance(dist, Rayleigh):
        return -math.log(q)
    if isinstance(dist, NakagamiM):
        return float(special.gammainccinv(dist.m, q)) / dist.m
    # composite: bisection on ln h
    lo, hi = math.log(support_quantiles(dist, 0.5)[0]) - 5, dist.mu_s + 40 * dist.sigma_s + 10
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if sf(dist, math.exp(mid)) > q:
            lo = mid
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi))


def cdf(dist, h):
    return 1.0 - sf(dist, h)


def support_quantiles(dist, q: float = 1e-13) -> tuple[float, float]:
    """(lower, upper) gain values outside of which the law has mass below ``q``."""
    dist = _canonical(dist)
    if isinstance(dist, Deterministic):
        return 1.0, 1.0
    if (fr := frozen(dist)) is not None:
        return float(fr.ppf(q)), float(fr.isf(q))
    # G*X: exponential lower tail is linear in h, so push the lower end further
    z = stats.norm.isf(q)
    return q * math.exp(dist.mu_s - z * dist.sigma_s), -math.log(q) * math.exp(dist.mu_s + z * dist.sigma_s)


def fractional_moment(dist, p: float) -> float:
    """E[H**p] for p > 0."""
    if not p > 0:
        raise ValueError("moment order must be positive")
    dist = _canonical(dist)
    if isinstance(dist, Deterministic):
        return 1.0
    if isinstance(dist, LogNormal):
        return math.exp(0.5 * (p * BETA * dist.sigma_db) ** 2)
    if isinstance(dist, NakagamiM):
        m = dist.m
        return math.exp(special.gammaln(m + p) - special.gammaln(m) - p * math.log(m))
    if isinstance(dist, Rayleigh):
        return math.gamma(1.0 + p)
    if isinstance(dist, CompositeRayleighLogNormal):
        return _moment_by_quadrature(dist, p)
    raise TypeError(f"no moment for {dist!r}")


def _moment_by_quadrature(dist, p: float) -> float:
    mu, s = dist.mu_s, dist.sigma_s
    # E[H^p] = E_X[X^p E_G[G^p]]; integrate the density of H directly instead
    # so the result stays an independent check on the density code.

    def integrand(z):
        h = math.exp(z)
        return h ** (p + 1.0) * _composite_pdf(h, mu, s)

    centre = mu + p * s * s
    lo, hi = centre - 16 * s - 40, centre + 16 * s + 6
    val, err = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-9, limit=400,
                              points=[mu, centre])
    if not math.isfinite(val) or err > 1e-6 * abs(val):
        raise NumericalError(f"fractional moment quadrature did not converge (err={err:g})")
    return val


def from_mapping(section: dict):
    """Build a gain law from a config section like ``{"type": "lognormal", "sigma_db": 4}``."""
    section = dict(section)
    kind = str(section.pop("type", "")).lower()
    if kind not in KINDS:
        raise ValueError(f"unknown channel type {kind!r}")
    cls = KINDS[kind]
    try:
        return cls(**{k: float(v) for k, v in section.items()})
    except TypeError as exc:
        raise ValueError(f"bad parameters for {kind}: {exc}") from None


def to_mapping(dist) -> dict:
    out = {"type": dist.kind}
    for name in getattr(dist, "__dataclass_fields__", {}):
        out[name] = getattr(dist, name)
    return out
