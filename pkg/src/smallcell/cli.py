"""Command-line front end: coverage / cdf / ase / regimes / plot.

Every CSV starts with one comment line (tool version, config hash, seed)
followed by a header row.  Exit codes: 0 ok, 2 config or input error,
3 numeric tolerance failure, 4 root bracket failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from . import montecarlo as mc
from . import regimes
from .channel import NumericalError
from .config import ConfigError, SIR, SINR, SIRP, SARP
from .coverage import CoverageEngine, QuadratureSpec, ase_upper_bound
from .equivalence import build_scenario, strongest_power_quantile

log = logging.getLogger("smallcell")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_BRACKET = 0, 2, 3, 4
DEFAULT_SWEEP = (0.1, 1e4, 20)

COLUMNS = {
    "coverage": ["lambda", "p_c_analytic", "p_c_mc", "ci_lo", "ci_hi", "p_c_nl", "p_c_l"],
    "cdf": ["lambda", "gamma_dbm", "cdf_analytic", "cdf_empirical"],
    "ase": ["lambda", "ase_upper"],
    "regimes": ["boundary", "lambda", "residual", "iterations"],
}
X_COLUMNS = ("lambda", "gamma_dbm")


class CliError(Exception):
    def __init__(self, msg, code):
        super().__init__(msg)
        self.code = code


# ------------------------------------------------------------------ helpers

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def write_csv(path: Path, columns, rows, cfg=None, seed=None):
    buf = io.StringIO()
    sha = cfg.sha256() if cfg is not None else "-"
    buf.write(f"# smallcell {__version__} config_sha256={sha} seed={seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) if not isinstance(v, str) else v for v in r])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def read_csv(path):
    """Returns (header, rows of strings); comment lines are skipped."""
    try:
        lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines()
                 if ln.strip() and not ln.startswith("#")]
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_CONFIG) from None
    if not lines:
        raise CliError(f"{path}: empty CSV", EXIT_CONFIG)
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def sweep_values(args) -> list[float]:
    if args.lambdas:
        try:
            vals = sorted(float(v) for v in args.lambdas.split(","))
        except ValueError:
            raise CliError(f"bad --lambdas {args.lambdas!r}", EXIT_CONFIG) from None
    else:
        a, b, n = DEFAULT_SWEEP
        if args.sweep:
            try:
                a, b, n = (float(x) for x in args.sweep.split(":"))
            except ValueError:
                raise CliError(f"bad --sweep {args.sweep!r}, want start:stop:points", EXIT_CONFIG) from None
        vals = list(np.logspace(math.log10(a), math.log10(b), int(n)))
    if not vals or min(vals) <= 0:
        raise CliError("sweep values must be positive", EXIT_CONFIG)
    return vals


def load_config(args) -> cfgmod.NetworkConfig:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.default_scenario()
    kw = {}
    if args.metric:
        kw["metric"] = args.metric
    if args.association:
        kw["association"] = args.association
    if kw:
        cfg = cfg.with_(**kw)
    return cfgmod.validate(cfg)


def _out(args, name) -> Path:
    return Path(args.out) / name


# ------------------------------------------------------------------ commands

def cmd_coverage(args) -> int:
    cfg = load_config(args)
    lams = sweep_values(args)
    sc = build_scenario(cfg) if args.engine in ("analytic", "both") else None
    rows, bad = [], 0
    for lam in lams:
        c = cfg.with_(lam=lam)
        row = [lam, None, None, None, None, None, None]
        if sc is not None:
            res = CoverageEngine(sc.at_density(lam)).coverage()
            bad += res.flagged
            row[1], row[5], row[6] = res.p_c, res.p_c_nl, res.p_c_l
        if args.engine in ("mc", "both"):
            est = mc.estimate_coverage(c, args.trials, args.seed, args.threads)
            row[2:5] = [est.p, est.ci_low, est.ci_high]
        log.info("lambda=%g %s", lam, row[1:])
        rows.append(row)
    p = write_csv(_out(args, "coverage.csv"), COLUMNS["coverage"], rows, cfg, args.seed)
    print(p)
    if bad:
        log.error("%d analytic points missed the tolerance", bad)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_cdf(args) -> int:
    cfg = load_config(args)
    lams = sweep_values(args) if (args.lambdas or args.sweep) else [cfg.lam]
    sc = build_scenario(cfg)
    rows = []
    for lam in lams:
        s = sc.at_density(lam)
        lo = strongest_power_quantile(s, 1e-4)
        hi = strongest_power_quantile(s, 1 - 1e-4)
        g_dbm = np.linspace(math.floor(10 * math.log10(lo)) + 30, math.ceil(10 * math.log10(hi)) + 30, 201)
        g = 10 ** ((g_dbm - 30) / 10)
        ana = s.strongest_power_cdf(g)
        emp = [None] * len(g)
        if args.engine in ("mc", "both"):
            emp = mc.estimate_strongest_power_cdf(cfg.with_(lam=lam), args.trials, g, args.seed, args.threads)
        if args.engine == "mc":
            ana = [None] * len(g)
        rows += [[lam, x, a, e] for x, a, e in zip(g_dbm, ana, emp)]
    print(write_csv(_out(args, "cdf.csv"), COLUMNS["cdf"], rows, cfg, args.seed))
    return EXIT_OK


def cmd_ase(args) -> int:
    cfg = load_config(args)
    sc = build_scenario(cfg)
    # each ASE point is ~60 coverage solves; 1e-3 per solve is ample for the integral
    quad = QuadratureSpec(target_abs_tol=1e-3)
    rows = []
    for lam in sweep_values(args):
        eng = CoverageEngine(sc.at_density(lam), quad)
        a = ase_upper_bound(cfg.with_(lam=lam), p_c_fn=lambda u: eng.coverage(threshold=u).p_c)
        log.info("lambda=%g ase=%g", lam, a)
        rows.append([lam, a])
    print(write_csv(_out(args, "ase.csv"), COLUMNS["ase"], rows, cfg, args.seed))
    return EXIT_OK


def cmd_regimes(args) -> int:
    cfg = load_config(args)
    lo, hi = args.bracket.split(":") if args.bracket else regimes.DEFAULT_BRACKET
    try:
        bracket = (float(lo), float(hi))
    except ValueError:
        raise CliError(f"bad --bracket {args.bracket!r}", EXIT_CONFIG) from None
    opts = regimes.SolverOptions(bracket=bracket, trials=args.trials, seed=args.seed,
                                 threads=args.threads, engine=args.interference)
    rep = regimes.regime_report(cfg, args.epsilon, opts)
    print(f"lambda_nlr_sdr = {rep.lambda_nlr_sdr:.6g} BSs/km^2")
    print(f"lambda_sdr_idr = {rep.lambda_sdr_idr:.6g} BSs/km^2  (p_c max = {rep.p_c_max:.6g})")
    print(f"lambda_idr_ilr = {rep.lambda_idr_ilr:.6g} BSs/km^2  (epsilon = {rep.epsilon:g})")
    print(f"ordered = {rep.ordered}")
    for name, msg in rep.failures.items():
        print(f"{name}: {msg}")
    print(write_csv(_out(args, "regimes.csv"), COLUMNS["regimes"], rep.rows(), cfg, args.seed))
    if "nlr_sdr" in rep.failures or "idr_ilr" in rep.failures:
        return EXIT_BRACKET
    return EXIT_OK


def cmd_plot(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    header, rows = read_csv(args.csv)
    if not rows:
        raise CliError(f"{args.csv}: no data rows", EXIT_CONFIG)
    xcol = next((c for c in X_COLUMNS if c in header), None)
    if xcol is None:
        raise CliError(f"{args.csv}: needs one of the columns {', '.join(X_COLUMNS)}", EXIT_CONFIG)
    skip = {xcol, "lambda", "boundary", "iterations", "ci_lo", "ci_hi"}
    ycols = [c for c in header if c not in skip][:6]
    if not ycols:
        raise CliError(f"{args.csv}: no data columns", EXIT_CONFIG)

    def col(name):
        i = header.index(name)
        return np.array([float(r[i]) if r[i] != "" else np.nan for r in rows])

    x = col(xcol)
    matplotlib.rcParams["svg.hashsalt"] = "smallcell"
    fig, ax = plt.subplots(figsize=(6, 4))
    for c in ycols:
        y = col(c)
        if np.all(np.isnan(y)):
            continue
        ax.plot(x, y, marker=".", label=c)
    if xcol == "lambda":
        ax.set_xscale("log")
        ax.set_xlabel("BS density (BSs/km$^2$)")
    else:
        ax.set_xlabel("strongest received power (dBm)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    out = Path(args.out) / (Path(args.csv).stem + ".svg")
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    print(out)
    return EXIT_OK


# ------------------------------------------------------------------ entry

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML scenario file (default: built-in reference scenario)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--trials", type=int, default=10_000)
    common.add_argument("--engine", choices=["analytic", "mc", "both"], default="analytic")
    common.add_argument("--metric", choices=[SINR, SIR])
    common.add_argument("--association", choices=[SIRP, SARP])
    common.add_argument("--epsilon", type=float, default=regimes.DEFAULT_EPSILON)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", default=".")
    common.add_argument("--lambdas", help="comma-separated densities in BSs/km^2")
    common.add_argument("--sweep", help="log sweep start:stop:points (default 0.1:1e4:20)")

    p = argparse.ArgumentParser(prog="smallcell", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"smallcell {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in (("coverage", cmd_coverage), ("cdf", cmd_cdf), ("ase", cmd_ase)):
        sp = sub.add_parser(name, parents=[common])
        sp.set_defaults(func=fn)
    sp = sub.add_parser("regimes", parents=[common])
    sp.add_argument("--bracket", help="density bracket lo:hi in BSs/km^2 (default 1e-2:1e4)")
    sp.add_argument("--interference", choices=["analytic", "mc"], default="analytic",
                    help="mean-interference evaluator used by the root search")
    sp.set_defaults(func=cmd_regimes)
    sp = sub.add_parser("plot", parents=[common])
    sp.add_argument("csv")
    sp.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    level = os.environ.get("SCN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.trials < 1 or args.threads < 1:
        print("error: --trials and --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except regimes.BracketError as exc:
        print(f"bracket error: {exc}", file=sys.stderr)
        return EXIT_BRACKET
    except NumericalError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
