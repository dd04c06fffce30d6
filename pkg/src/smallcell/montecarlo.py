"""Monte Carlo simulation of the typical user in a Poisson small-cell layout.

Each trial draws a fresh PPP of base stations in a disk around the user,
classifies every link as NL or L, draws the per-link gain from the
configured law and associates with the strongest received power.  Trials
are grouped into fixed-size blocks; block ``b`` of stream ``s`` uses the
generator ``SeedSequence(seed, spawn_key=(s, b))`` so results do not depend
on how many worker threads run the blocks.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import channel
from .config import L, NL, SIR, NetworkConfig, p_los, validate

log = logging.getLogger(__name__)

MIN_RADIUS = 2000.0      # metres
MIN_COUNT = 300.0        # expected BSs in the window
POINTS_PER_BLOCK = 2e6

# stream ids, so different estimators never share random numbers by accident
STREAM_TRIALS = 0
STREAM_SHIFTED = 1


def window_radius(config: NetworkConfig) -> float:
    """Default simulation window: at least 2 km and at least 300 BSs on average."""
    return max(MIN_RADIUS, math.sqrt(MIN_COUNT / (math.pi * config.lambda_m2)))


# ------------------------------------------------------------------ single deployments

@dataclass
class Deployment:
    window_radius: float
    positions: np.ndarray     # (n, 2) metres, user at the origin
    los: np.ndarray           # bool per BS
    gains: np.ndarray         # power gain per BS

    @property
    def n(self) -> int:
        return len(self.gains)


@dataclass(frozen=True)
class TrialRecord:
    serving_index: int        # -1 when no BS was deployed
    serving_branch: str | None
    serving_power: float
    interference: float
    sinr: float
    sir: float


def _sample_gains(config, los, rng):
    h = np.empty(len(los))
    nl = ~los
    h[los] = channel.sample(config.gain_l, rng, int(los.sum()))
    h[nl] = channel.sample(config.gain_nl, rng, int(nl.sum()))
    return h


def _uniform_disk(radius, n, rng):
    r = radius * np.sqrt(rng.random(n))
    # a point exactly at the user is singular; it has probability zero but redraw anyway
    while np.any(bad := r == 0):
        r[bad] = radius * np.sqrt(rng.random(int(bad.sum())))
    return r


def deploy(config: NetworkConfig, window_radius: float, rng: np.random.Generator) -> Deployment:
    """One PPP realisation in the disk of the given radius centred on the user."""
    if not window_radius > 0:
        raise ValueError("window radius must be positive")
    n = rng.poisson(config.lambda_m2 * math.pi * window_radius ** 2)
    r = _uniform_disk(window_radius, n, rng)
    theta = rng.uniform(0.0, 2 * math.pi, n)
    pos = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    los = rng.random(n) < p_los(config.blockage, r)
    return Deployment(window_radius, pos, los, _sample_gains(config, los, rng))


def _tables(config):
    pieces = config.pathloss.pieces
    b = np.array([[config.b_const(br, k) for k in range(len(pieces))] for br in (NL, L)])
    a = np.array([[config.alpha(br, k) for k in range(len(pieces))] for br in (NL, L)])
    return b, a


def received_power(config: NetworkConfig, r, los, gain):
    """B * H * r^-alpha with the branch and the path-loss piece picked per link."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("distance must be positive")
    b, a = _tables(config)
    br = np.asarray(los, dtype=int)
    k = config.pathloss.piece_index(r)
    out = b[br, k] * np.asarray(gain, dtype=float) * r ** (-a[br, k])
    return float(out) if out.ndim == 0 else out


def associate(config: NetworkConfig, deployment: Deployment, observer=(0.0, 0.0)) -> TrialRecord:
    """Serve the user at ``observer`` from the BS with the largest received power."""
    if deployment.n == 0:
        return TrialRecord(-1, None, 0.0, 0.0, 0.0, 0.0)
    d = np.hypot(deployment.positions[:, 0] - observer[0], deployment.positions[:, 1] - observer[1])
    pw = np.atleast_1d(received_power(config, d, deployment.los, deployment.gains))
    i = int(np.argmax(pw))
    interf = float(np.sum(np.delete(pw, i)))
    s = float(pw[i])
    sir = math.inf if interf == 0 else s / interf
    return TrialRecord(i, L if deployment.los[i] else NL, s, interf,
                       s / (interf + config.noise_w), sir)


# ------------------------------------------------------------------ vectorised trials

@dataclass
class TrialRecords:
    """Per-trial outcomes as parallel arrays (one entry per trial)."""

    count: np.ndarray
    serving_index: np.ndarray
    serving_branch: np.ndarray   # 0 = NL, 1 = L, -1 = empty deployment
    serving_power: np.ndarray
    interference: np.ndarray
    noise: float

    def __len__(self):
        return len(self.count)

    @property
    def empty(self) -> int:
        return int(np.sum(self.count == 0))

    @property
    def sinr(self):
        return self.serving_power / (self.interference + self.noise)

    @property
    def sir(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.serving_power / self.interference
        out[(self.interference == 0) & (self.serving_power > 0)] = np.inf
        out[self.serving_power == 0] = 0.0
        return out

    def metric(self, name: str):
        return self.sir if name == SIR else self.sinr

    @classmethod
    def concat(cls, parts):
        return cls(*(np.concatenate([getattr(p, f) for p in parts])
                     for f in ("count", "serving_index", "serving_branch", "serving_power", "interference")),
                   noise=parts[0].noise)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", "count", "serving_index", "serving_branch", "serving_power_w",
                        "interference_w", "sinr", "sir"])
            sinr, sir = self.sinr, self.sir
            for i in range(len(self)):
                br = {-1: "", 0: NL, 1: L}[int(self.serving_branch[i])]
                w.writerow([i, int(self.count[i]), int(self.serving_index[i]), br,
                            repr(float(self.serving_power[i])), repr(float(self.interference[i])),
                            repr(float(sinr[i])), repr(float(sir[i]))])


def _run_block(config, radius, n, rng, offset=None) -> TrialRecords:
    counts = rng.poisson(config.lambda_m2 * math.pi * radius ** 2, n)
    tot = int(counts.sum())
    if offset is None:
        r = _uniform_disk(radius, tot, rng)
    else:
        # user displaced from the window centre; the window is grown by |offset|
        # by the caller so the user still sees at least ``radius`` around it
        rr = _uniform_disk(radius, tot, rng)
        th = rng.uniform(0.0, 2 * math.pi, tot)
        r = np.hypot(rr * np.cos(th) - offset[0], rr * np.sin(th) - offset[1])
        r[r == 0] = np.finfo(float).tiny
    los = rng.random(tot) < p_los(config.blockage, r)
    pw = received_power(config, r, los, _sample_gains(config, los, rng))
    pw = np.atleast_1d(pw)

    idx = np.full(n, -1)
    branch = np.full(n, -1)
    serve = np.zeros(n)
    interf = np.zeros(n)
    full = counts > 0
    if tot:
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])[full]
        seg = np.repeat(np.arange(n), counts)
        pmax = np.maximum.reduceat(pw, starts)
        slot = np.cumsum(full) - 1            # trial -> row of pmax
        hit = np.flatnonzero(pw == pmax[slot[seg]])
        # first maximiser in each trial
        first = hit[np.unique(seg[hit], return_index=True)[1]]
        mask = np.ones(tot, dtype=bool)
        mask[first] = False
        idx[full] = first - starts
        branch[full] = los[first].astype(int)
        serve[full] = pw[first]
        interf[full] = np.add.reduceat(np.where(mask, pw, 0.0), starts)
    return TrialRecords(counts, idx, branch, serve, interf, config.noise_w)


def _block_size(config, radius) -> int:
    mean = config.lambda_m2 * math.pi * radius ** 2
    return int(min(2000, max(1, POINTS_PER_BLOCK // max(mean, 1.0))))


def simulate(config: NetworkConfig, trials: int, seed: int = 0, threads: int = 1,
             radius: float | None = None, offset=None, stream: int = STREAM_TRIALS) -> TrialRecords:
    """Run ``trials`` independent trials and return their records in trial order."""
    validate(config)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    radius = window_radius(config) if radius is None else float(radius)
    if offset is not None:
        offset = (float(offset[0]), float(offset[1]))
        radius = radius + math.hypot(*offset)
    bs = _block_size(config, radius)
    sizes = [bs] * (trials // bs) + ([trials % bs] if trials % bs else [])

    def job(b):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, b)))
        return _run_block(config, radius, sizes[b], rng, offset)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(job, range(len(sizes))))
    else:
        parts = [job(b) for b in range(len(sizes))]
    rec = TrialRecords.concat(parts)
    if rec.empty:
        log.info("%d of %d trials had no BS in the window", rec.empty, trials)
    return rec


# ------------------------------------------------------------------ estimators

@dataclass(frozen=True)
class CoverageEstimate:
    p: float
    ci_low: float
    ci_high: float
    trials: int
    covered: int
    empty: int

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)


def wilson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def estimate_coverage(config: NetworkConfig, trials: int = 10_000, seed: int = 0, threads: int = 1,
                      threshold: float | None = None, metric: str | None = None,
                      radius: float | None = None, offset=None, records: TrialRecords | None = None
                      ) -> CoverageEstimate:
    """Fraction of trials with SINR (or SIR) above the threshold, with a Wilson 95% interval."""
    if records is None:
        stream = STREAM_TRIALS if offset is None else STREAM_SHIFTED
        records = simulate(config, trials, seed, threads, radius, offset, stream)
    t_lin = config.threshold if threshold is None else threshold
    k = int(np.sum(records.metric(metric or config.metric) > t_lin))
    lo, hi = wilson(k, len(records))
    return CoverageEstimate(k / len(records), lo, hi, len(records), k, records.empty)


def estimate_strongest_power_cdf(config: NetworkConfig, trials: int, gamma, seed: int = 0,
                                 threads: int = 1, records: TrialRecords | None = None):
    """Empirical CDF of the strongest received power on the grid ``gamma`` (watts)."""
    if records is None:
        records = simulate(config, trials, seed, threads)
    s = np.sort(records.serving_power)
    return np.searchsorted(s, np.asarray(gamma, dtype=float), side="right") / len(s)


def ks_distance(samples, cdf) -> float:
    """Kolmogorov-Smirnov distance between a sample and a continuous CDF."""
    return float(stats.kstest(np.asarray(samples, dtype=float), cdf).statistic)


@dataclass(frozen=True)
class InterferenceEstimate:
    mean: float
    stderr: float
    trials: int


def mean_interference(config: NetworkConfig, trials: int = 10_000, seed: int = 0, threads: int = 1,
                      records: TrialRecords | None = None) -> InterferenceEstimate:
    """Sample mean of the aggregate interference with the serving BS excluded."""
    if records is None:
        records = simulate(config, trials, seed, threads)
    i = records.interference
    return InterferenceEstimate(float(i.mean()), float(i.std(ddof=1) / math.sqrt(len(i))), len(i))


def equivalent_distances(config: NetworkConfig, trials: int, seed: int = 0, radius: float | None = None):
    """Pooled equivalent distances r * (B H)^(-1/alpha) per branch, with the window used."""
    validate(config)
    radius = window_radius(config) if radius is None else radius
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2, 0)))
    n = int(rng.poisson(config.lambda_m2 * math.pi * radius ** 2 * trials))
    r = _uniform_disk(radius, n, rng)
    los = rng.random(n) < p_los(config.blockage, r)
    h = _sample_gains(config, los, rng)
    b, a = _tables(config)
    br = los.astype(int)
    k = config.pathloss.piece_index(r)
    t = r * (b[br, k] * h) ** (-1.0 / a[br, k])
    return {NL: t[~los], L: t[los]}, radius


def displacement_ks(config: NetworkConfig, trials: int = 1000, seed: int = 0) -> dict:
    """KS distance between simulated equivalent distances and Lambda(t) / Lambda(t_safe), per branch.

    Only points with t below t_safe enter, where t_safe is small enough that no
    BS outside the window could have landed there (gain at its 1e-12 upper quantile).
    """
    from .equivalence import build_scenario

    lam_t = build_scenario(config)
    t, radius = equivalent_distances(config, trials, seed)
    out = {}
    for br in (NL, L):
        h_hi = channel.support_quantiles(config.gain(br), 1e-12)[1]
        t_safe = min(radius * (config.b_const(br, k) * h_hi) ** (-1.0 / config.alpha(br, k))
                     for k in range(config.pathloss.n))
        x = t[br][t[br] <= t_safe]
        if x.size == 0:
            continue
        meas = lam_t.pair(br).measure
        top = float(meas(np.array([t_safe]))[0])
        out[br] = ks_distance(x, lambda v: meas(np.atleast_1d(v)) / top)
    return out
