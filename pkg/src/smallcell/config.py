"""Scenario parameters, unit conversion and validation.

All computation happens in watts and meters.  dB and dBm only appear in the
config fields themselves.  Densities are stored as BSs/km^2 and exposed per
m^2 through ``NetworkConfig.lambda_m2``.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import channel

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

SIRP = "sirp"
SARP = "sarp"
SINR = "sinr"
SIR = "sir"
NL = "NL"
L = "L"
BRANCHES = (NL, L)
UNBOUNDED = "unbounded"

KM2 = 1e6  # m^2 per km^2


class ConfigError(ValueError):
    """Invalid scenario.  ``errors`` holds one message per violated field."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def dbm_to_watts(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("dBm value must be finite")
    out = 10.0 ** ((x - 30.0) / 10.0)
    return float(out) if out.ndim == 0 else out


def watts_to_dbm(w):
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("power must be finite and positive")
    out = 10.0 * np.log10(w) + 30.0
    return float(out) if out.ndim == 0 else out


def db_to_linear(x):
    out = 10.0 ** (np.asarray(x, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def linear_to_db(x):
    out = 10.0 * np.log10(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- blockage

def _exp_poly(u):
    return (1.0 + u) * np.exp(-u)


def _nlos_cum(u):
    """h(u) = u^2/2 - 1 + (1+u)e^{-u} = sum_{n>=3} (-1)^(n+1) (n-1) u^n / n!."""
    u = np.asarray(u, dtype=float)
    small = np.minimum(u, 1.0)
    series = np.zeros_like(small)
    term = small ** 3 / 6.0          # u^n / n! at n = 3
    for n in range(3, 24):
        series += (-1) ** (n + 1) * (n - 1) * term
        term = term * small / (n + 1)
    with np.errstate(invalid="ignore", over="ignore"):
        direct = 0.5 * u * u - 1.0 + _exp_poly(np.minimum(u, 700.0))
    return np.where(u < 1.0, series, direct)


def _los_cum(u):
    """1 - (1+u)e^{-u}, via u^2/2 - h(u) near zero."""
    u = np.asarray(u, dtype=float)
    return np.where(u < 1.0, 0.5 * u * u - _nlos_cum(u), 1.0 - _exp_poly(np.minimum(u, 700.0)))


@dataclass(frozen=True)
class Step:
    """LoS iff R <= d."""

    d: float
    kind = "step"

    def p_los(self, r):
        return (np.asarray(r, dtype=float) <= self.d).astype(float)

    def los_mass(self, a, b):
        """int_a^b p_los(R) R dR."""
        a = np.minimum(a, self.d)
        b = np.minimum(b, self.d)
        return 0.5 * (b * b - a * a)

    @property
    def kinks(self):
        return (self.d,)


@dataclass(frozen=True)
class NegExp:
    """p_los(R) = exp(-kappa R)."""

    kappa: float
    kind = "negexp"

    def p_los(self, r):
        return np.exp(-self.kappa * np.asarray(r, dtype=float))

    def los_mass(self, a, b):
        k = self.kappa
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        with np.errstate(invalid="ignore", over="ignore"):
            # (1+u)e^{-u} differences; finite at x = inf
            far = _exp_poly(k * a) - np.where(np.isinf(b), 0.0, _exp_poly(k * b))
        # near the user the primitive cancels; u^2/2 - h(u) has no cancellation
        near = (_los_cum(k * b) - _los_cum(k * a))
        return np.where(k * b < 1.0, near, far) / k**2

    def nlos_mass(self, a, b):
        """int_a^b (1 - p_los(R)) R dR, stable for small kappa R."""
        k = self.kappa
        return (_nlos_cum(k * np.asarray(b, dtype=float)) - _nlos_cum(k * np.asarray(a, dtype=float))) / k**2

    @property
    def kinks(self):
        return ()


def _check_r(r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(np.isnan(r)):
        raise ValueError("distance must be non-negative")
    return r


def p_los(model, r):
    out = model.p_los(_check_r(r))
    return float(out) if np.ndim(out) == 0 else out


def p_nlos(model, r):
    out = 1.0 - model.p_los(_check_r(r))
    return float(out) if np.ndim(out) == 0 else out


def branch_mass(model, branch: str, a, b):
    """int_a^b p^U(R) R dR for branch U, with b allowed to be inf for NL only if p_L>0 there."""
    if branch == NL and hasattr(model, "nlos_mass"):
        return model.nlos_mass(a, b)
    lm = model.los_mass(a, b)
    if branch == L:
        return lm
    return 0.5 * (np.asarray(b, dtype=float) ** 2 - np.asarray(a, dtype=float) ** 2) - lm


# ---------------------------------------------------------------- path loss

@dataclass(frozen=True)
class PathLossPiece:
    a_db_nl: float
    a_db_l: float
    alpha_nl: float
    alpha_l: float

    def alpha(self, branch):
        return self.alpha_nl if branch == NL else self.alpha_l

    def a_db(self, branch):
        return self.a_db_nl if branch == NL else self.a_db_l


@dataclass(frozen=True)
class PathLossModel:
    pieces: tuple
    breakpoints: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))

    @property
    def n(self) -> int:
        return len(self.pieces)

    @property
    def edges(self) -> tuple:
        """(d_0, d_1, ..., d_N) with d_0 = 0 and d_N = inf."""
        return (0.0, *self.breakpoints, math.inf)

    def piece_index(self, r):
        """Index of the piece containing distance r; piece n covers (d_{n-1}, d_n]."""
        return np.searchsorted(np.asarray(self.breakpoints), r, side="left")


# ---------------------------------------------------------------- scenario

@dataclass(frozen=True)
class NetworkConfig:
    lam: float = 10.0                       # BSs per km^2
    pt_dbm: float = 30.0
    noise_dbm: float = -95.0
    threshold_db: float = 0.0
    pathloss: PathLossModel = field(default_factory=lambda: PathLossModel(
        (PathLossPiece(30.8, 2.7, 4.28, 2.42),)))
    blockage: Step | NegExp = field(default_factory=lambda: Step(250.0))
    gain_nl: object = field(default_factory=lambda: channel.LogNormal(4.0))
    gain_l: object = field(default_factory=lambda: channel.LogNormal(3.0))
    association: str = SARP
    metric: str = SINR

    # derived quantities
    @property
    def lambda_m2(self) -> float:
        return self.lam / KM2

    @property
    def pt(self) -> float:
        return dbm_to_watts(self.pt_dbm)

    @property
    def noise(self) -> float:
        """Noise power used by the metric (zero for SIR)."""
        return 0.0 if self.metric == SIR else dbm_to_watts(self.noise_dbm)

    @property
    def noise_w(self) -> float:
        return dbm_to_watts(self.noise_dbm)

    @property
    def threshold(self) -> float:
        return db_to_linear(self.threshold_db)

    def gain(self, branch):
        return self.gain_nl if branch == NL else self.gain_l

    def b_const(self, branch, n: int = 0) -> float:
        """B_n^U = P_t 10^(-A_n^U/10)."""
        return self.pt * db_to_linear(-self.pathloss.pieces[n].a_db(branch))

    def alpha(self, branch, n: int = 0) -> float:
        return self.pathloss.pieces[n].alpha(branch)

    def with_(self, **kw) -> "NetworkConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        pl = self.pathloss
        edges = [*pl.breakpoints, UNBOUNDED]
        pieces = {}
        for i, p in enumerate(pl.pieces):
            pieces[str(i + 1)] = {
                "a_db_nl": p.a_db_nl, "a_db_l": p.a_db_l,
                "alpha_nl": p.alpha_nl, "alpha_l": p.alpha_l, "end_m": edges[i],
            }
        blk = {"type": self.blockage.kind}
        blk.update({k: getattr(self.blockage, k) for k in self.blockage.__dataclass_fields__})
        return {
            "network": {
                "lambda": self.lam, "pt_dbm": self.pt_dbm, "noise_dbm": self.noise_dbm,
                "threshold_db": self.threshold_db, "association": self.association,
                "metric": self.metric,
            },
            "pathloss": {"piece": pieces},
            "blockage": blk,
            "channel": {"nl": channel.to_mapping(self.gain_nl), "l": channel.to_mapping(self.gain_l)},
        }

    def sha256(self) -> str:
        def norm(x):
            if isinstance(x, dict):
                return {k: norm(v) for k, v in x.items()}
            if isinstance(x, (int, float)) and not isinstance(x, bool):
                return float(x)
            return x
        blob = json.dumps(norm(self.to_dict()), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def default_scenario(**overrides) -> NetworkConfig:
    """Default scenario: single slope, step blockage at 250 m, SARP with log-normal shadowing."""
    return NetworkConfig(**overrides)


def sirp_rayleigh(**overrides) -> NetworkConfig:
    kw = dict(gain_nl=channel.Rayleigh(), gain_l=channel.Rayleigh(), association=SIRP)
    kw.update(overrides)
    return NetworkConfig(**kw)


def sirp_rician(k_db: float = 10.0, **overrides) -> NetworkConfig:
    """NLoS Rayleigh, LoS Rician(K) through the Nakagami match."""
    kw = dict(gain_nl=channel.Rayleigh(), gain_l=channel.RicianApprox(k_db), association=SIRP)
    kw.update(overrides)
    return NetworkConfig(**kw)


# ---------------------------------------------------------------- validation

def _finite_pos(x) -> bool:
    try:
        return math.isfinite(x) and x > 0
    except TypeError:
        return False


def validate(cfg: NetworkConfig) -> NetworkConfig:
    """Check every invariant; raise ConfigError listing all violations."""
    errs = []
    if not _finite_pos(cfg.lam):
        errs.append("network.lambda: lambda must be positive")
    for name in ("pt_dbm", "noise_dbm", "threshold_db"):
        v = getattr(cfg, name)
        if not (isinstance(v, (int, float)) and math.isfinite(v)):
            errs.append(f"network.{name}: must be finite")
    if not errs:
        if not _finite_pos(cfg.pt) or not _finite_pos(cfg.noise_w):
            errs.append("network: power in watts must be finite and positive")
        if not _finite_pos(cfg.threshold):
            errs.append("network.threshold_db: linear threshold must be positive")
    if cfg.association not in (SIRP, SARP):
        errs.append(f"network.association: unknown rule {cfg.association!r}")
    if cfg.metric not in (SINR, SIR):
        errs.append(f"network.metric: unknown metric {cfg.metric!r}")

    pl = cfg.pathloss
    if pl.n < 1:
        errs.append("pathloss: at least one piece required")
    if len(pl.breakpoints) != max(pl.n - 1, 0):
        errs.append("pathloss: need exactly one breakpoint between consecutive pieces")
    bp = list(pl.breakpoints)
    if any(not _finite_pos(b) for b in bp):
        errs.append("pathloss.breakpoints: must be finite and positive")
    elif any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
        errs.append("pathloss.breakpoints: breakpoints not increasing")
    for i, p in enumerate(pl.pieces):
        path = f"pathloss.piece.{i + 1}"
        for br in BRANCHES:
            if not _finite_pos(p.alpha(br)):
                errs.append(f"{path}.alpha_{br.lower()}: exponent must be positive")
            a = p.a_db(br)
            if not (isinstance(a, (int, float)) and math.isfinite(a)):
                errs.append(f"{path}.a_db_{br.lower()}: must be finite")

    blk = cfg.blockage
    if isinstance(blk, Step):
        if not (_finite_pos(blk.d) or blk.d == 0):
            errs.append("blockage.d: must be finite and non-negative")
    elif isinstance(blk, NegExp):
        if not _finite_pos(blk.kappa):
            errs.append("blockage.kappa: must be positive")
    else:
        errs.append(f"blockage: unknown model {blk!r}")

    want = channel.FADING if cfg.association == SIRP else channel.SHADOWING
    for br, g in ((NL, cfg.gain_nl), (L, cfg.gain_l)):
        path = f"channel.{br.lower()}"
        for e in channel.check(g):
            errs.append(f"{path}: {e}")
        role = getattr(g, "role", None)
        if role not in (want, channel.BOTH) and cfg.association in (SIRP, SARP):
            errs.append(f"{path}: {cfg.association.upper()} needs a {want} law, got {getattr(g, 'kind', g)}")

    if not errs:
        # moment condition E[H^{2/alpha}] < inf for every branch and piece
        for i, p in enumerate(pl.pieces):
            for br in BRANCHES:
                try:
                    mom = channel.fractional_moment(cfg.gain(br), 2.0 / p.alpha(br))
                except channel.NumericalError as exc:
                    errs.append(f"channel.{br.lower()}: moment check failed ({exc})")
                    continue
                if not _finite_pos(mom):
                    errs.append(f"channel.{br.lower()}: E[H^(2/alpha)] is not finite for piece {i + 1}")
    if errs:
        raise ConfigError(errs)
    return cfg


def errors(cfg: NetworkConfig) -> list[str]:
    """Like validate() but returns the list of problems instead of raising."""
    try:
        validate(cfg)
    except ConfigError as exc:
        return exc.errors
    return []


# ---------------------------------------------------------------- files

def _edge(v):
    if isinstance(v, str):
        if v.lower() == UNBOUNDED:
            return math.inf
        raise ConfigError(f"pathloss: bad breakpoint {v!r}")
    return float(v)


def from_dict(doc: dict) -> NetworkConfig:
    """Build a config from the nested mapping of a config file.  Missing keys take the reference values."""
    base = default_scenario()
    for k in doc:
        if k not in ("network", "pathloss", "blockage", "channel"):
            raise ConfigError(f"{k}: unknown section (expected network, pathloss, blockage, channel)")
    net = dict(doc.get("network", {}))
    kw = {}
    key_map = {"lambda": "lam", "pt_dbm": "pt_dbm", "noise_dbm": "noise_dbm",
               "threshold_db": "threshold_db", "association": "association", "metric": "metric"}
    for k, v in net.items():
        if k not in key_map:
            raise ConfigError(f"network.{k}: unknown key")
        kw[key_map[k]] = v.lower() if isinstance(v, str) else float(v)

    pieces_doc = doc.get("pathloss", {}).get("piece")
    if pieces_doc:
        order = sorted(pieces_doc, key=lambda s: int(s))
        pieces, ends = [], []
        for k in order:
            sec = pieces_doc[k]
            try:
                pieces.append(PathLossPiece(float(sec["a_db_nl"]), float(sec["a_db_l"]),
                                            float(sec["alpha_nl"]), float(sec["alpha_l"])))
            except KeyError as exc:
                raise ConfigError(f"pathloss.piece.{k}: missing {exc.args[0]}") from None
            ends.append(_edge(sec.get("end_m", UNBOUNDED)))
        if not math.isinf(ends[-1]):
            raise ConfigError("pathloss: last piece must end at 'unbounded'")
        kw["pathloss"] = PathLossModel(tuple(pieces), tuple(ends[:-1]))

    if "blockage" in doc:
        blk = dict(doc["blockage"])
        kind = str(blk.pop("type", "step")).lower()
        try:
            if kind == "step":
                kw["blockage"] = Step(float(blk["d"]))
            elif kind == "negexp":
                kw["blockage"] = NegExp(float(blk["kappa"]))
            else:
                raise ConfigError(f"blockage.type: unknown model {kind!r}")
        except KeyError as exc:
            raise ConfigError(f"blockage: missing {exc.args[0]}") from None

    ch = doc.get("channel", {})
    for key, attr in (("nl", "gain_nl"), ("l", "gain_l")):
        if key in ch:
            try:
                kw[attr] = channel.from_mapping(ch[key])
            except ValueError as exc:
                raise ConfigError(f"channel.{key}: {exc}") from None
    try:
        return replace(base, **kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load(path) -> NetworkConfig:
    """Read a TOML scenario file and validate it."""
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return validate(from_dict(doc))


def dumps(cfg: NetworkConfig) -> str:
    """Render a config back to TOML text (loadable by ``load``)."""
    d = cfg.to_dict()
    out = ["[network]"]
    for k, v in d["network"].items():
        out.append(f"{k} = {_toml_val(v)}")
    for k, sec in d["pathloss"]["piece"].items():
        out.append(f"\n[pathloss.piece.{k}]")
        for kk, vv in sec.items():
            out.append(f"{kk} = {_toml_val(vv)}")
    out.append("\n[blockage]")
    for k, v in d["blockage"].items():
        out.append(f"{k} = {_toml_val(v)}")
    for br in ("nl", "l"):
        out.append(f"\n[channel.{br}]")
        for k, v in d["channel"][br].items():
            out.append(f"{k} = {_toml_val(v)}")
    return "\n".join(out) + "\n"


def _toml_val(v):
    if isinstance(v, str):
        return json.dumps(v)
    return repr(float(v))
