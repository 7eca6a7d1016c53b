"""Command-line entry point: ``bayesext <subcommand> [options]``.

Each subcommand writes a CSV table to ``--out`` and a JSON run manifest
next to it (``<out>.manifest.json``).  Options may also come from a JSON
file given with ``--config``; flags given explicitly on the command line
win.  Exit codes: 0 success, 1 numerical failure, 2 invalid arguments.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, DegeneracyError, GeometryError, ParameterDomainError
from .io import write_csv, write_manifest, write_svg_lines
from .risk import (LAMBDA_GRID, TrialConfig, benchmark_eval, circle_constant_ratios, run_circle_risk,
                   run_spiked_risk, verify_expansions)
from .spiked import SamplerConfig

NUMERICAL_ERRORS = (ConvergenceError, DegeneracyError, GeometryError, ParameterDomainError,
                    FloatingPointError, np.linalg.LinAlgError)

DEFAULTS = {
    "circle-risk": dict(n=25, sigma2=1.0, omega=0.3, trials=100_000, seed=0, workers=1,
                        out="circle_risk.csv"),
    "spiked-risk": dict(l=5, n=20, lambda_grid=list(LAMBDA_GRID), trials=200, draws=None, burn_in=None,
                        y_samples=1000, seed=0, workers=1, out="spiked_risk.csv", svg=None),
    "verify-expansion": dict(n_list=[50, 100, 200, 400], r=1.0, sigma2=1.0, out="verify_expansion.csv"),
    "benchmark-eval": dict(l=80, draws=2000, points=1000, seed=0, repeats=5, out="benchmark_eval.csv"),
}


class UsageError(Exception):
    pass


def _floats(s: str):
    return [float(v) for v in s.split(",") if v.strip()]


def _ints(s: str):
    return [int(v) for v in s.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bayesext", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", type=Path, help="JSON file of option values")
        sp.add_argument("--out", type=Path, help="CSV output path")
        if seed:
            sp.add_argument("--seed", type=int)

    c = sub.add_parser("circle-risk", help="paired KL risks on the Fisher circle model")
    c.add_argument("--n", type=int)
    c.add_argument("--sigma2", type=float)
    c.add_argument("--omega", type=float, help="true angle")
    c.add_argument("--trials", type=int)
    c.add_argument("--workers", type=int)
    common(c)

    s = sub.add_parser("spiked-risk", help="paired KL risks on the spiked covariance model")
    s.add_argument("--l", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--lambda-grid", type=_floats, help="comma-separated lambda values")
    s.add_argument("--trials", type=int)
    s.add_argument("--draws", type=int)
    s.add_argument("--burn-in", type=int)
    s.add_argument("--y-samples", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--svg", type=Path, help="also write a risk-versus-lambda chart")
    common(s)

    v = sub.add_parser("verify-expansion", help="exact versus expanded posterior mean on the circle")
    v.add_argument("--n-list", type=_ints)
    v.add_argument("--r", type=float)
    v.add_argument("--sigma2", type=float)
    common(v, seed=False)

    b = sub.add_parser("benchmark-eval", help="evaluation cost of mixture versus extended plugin")
    b.add_argument("--l", type=int)
    b.add_argument("--draws", type=int)
    b.add_argument("--points", type=int)
    b.add_argument("--repeats", type=int)
    common(b)
    return p


def resolve(args: argparse.Namespace) -> dict:
    """Builtin defaults, then the config file, then explicit flags."""
    cfg = dict(DEFAULTS[args.command])
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from e
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        loaded = {k.replace("-", "_"): v for k, v in loaded.items()}
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update(loaded)
    for k in cfg:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    for k in ("out", "svg"):
        if cfg.get(k) is not None:
            cfg[k] = str(cfg[k])
    _validate(args.command, cfg)
    return cfg


def _validate(cmd, cfg):
    positive = {"n", "trials", "l", "draws", "points", "y_samples", "workers", "repeats"}
    for k in positive & set(cfg):
        if cfg[k] is not None and int(cfg[k]) < 1:
            raise UsageError(f"--{k.replace('_', '-')} must be at least 1")
    for k in ("sigma2", "r"):
        if k in cfg and not float(cfg[k]) > 0:
            raise UsageError(f"--{k} must be positive")
    if cfg.get("burn_in") is not None and int(cfg["burn_in"]) < 0:
        raise UsageError("--burn-in must be non-negative")
    if cmd == "spiked-risk":
        if int(cfg["n"]) < 2:
            raise UsageError("--n must be at least 2")
        if not cfg["lambda_grid"] or min(cfg["lambda_grid"]) <= 0:
            raise UsageError("--lambda-grid needs positive values")
    if cmd == "verify-expansion" and (not cfg["n_list"] or min(cfg["n_list"]) < 1):
        raise UsageError("--n-list needs positive integers")


# ---------------------------------------------------------------------------


def cmd_circle_risk(cfg) -> list:
    tc = TrialConfig("circle", int(cfg["n"]), int(cfg["trials"]), int(cfg["seed"]), float(cfg["omega"]),
                     float(cfg["sigma2"]), workers=int(cfg["workers"]))
    est = run_circle_risk(tc)
    ratios = circle_constant_ratios(est)
    rows = []
    for name, m, s, d, ds in zip(est.names, est.mean, est.stderr, est.paired_diffs, est.paired_stderrs):
        ratio = ratios[name][0] if name in ratios else 0.0
        rows.append([name, m, s, d, ds, ratio])
    out = write_csv(cfg["out"], ["predictive", "mean_risk", "stderr", "paired_diff_vs_mle_plugin",
                                 "diff_stderr", "ratio_to_leading_constant"], rows)
    for name, (r, se) in ratios.items():
        print(f"{name}: gain over mle-plugin / leading constant = {r:.4f} +- {se:.4f}")
    if est.degenerate:
        print(f"redrew {est.degenerate} degenerate trials")
    return [out]


def cmd_spiked_risk(cfg) -> list:
    l = int(cfg["l"])
    base = SamplerConfig.for_dimension(l)
    sampler = SamplerConfig(n_draws=int(cfg["draws"] or base.n_draws),
                            burn_in=int(base.burn_in if cfg["burn_in"] is None else cfg["burn_in"]))
    tc = TrialConfig("spiked", int(cfg["n"]), int(cfg["trials"]), int(cfg["seed"]), 1.0, l=l,
                     sampler=sampler, y_samples=int(cfg["y_samples"]), workers=int(cfg["workers"]))
    grid = [float(v) for v in cfg["lambda_grid"]]
    ests = run_spiked_risk(tc, grid)
    header = ["lambda", "predictive", "mean_risk", "stderr", "paired_diff_vs_bayes_plugin", "diff_stderr",
              "paired_diff_vs_mixture", "diff_vs_mixture_stderr"]
    rows = []
    for lam, est in zip(grid, ests):
        for name, m, s in zip(est.names, est.mean, est.stderr):
            d1, s1 = est.diff("bayes-plugin", name)
            d2, s2 = est.diff(name, "mixture")
            rows.append([lam, name, m, s, d1, s1, d2, s2])
        print(f"lambda={lam:g}: " + ", ".join(f"{n}={m:.5f}" for n, m in zip(est.names, est.mean)))
    outputs = [write_csv(cfg["out"], header, rows)]
    if cfg.get("svg"):
        series = {name: [e.mean[j] for e in ests] for j, name in enumerate(ests[0].names)}
        outputs.append(write_svg_lines(cfg["svg"], grid, series, "lambda", "KL risk", log_x=True))
    return outputs


def cmd_verify_expansion(cfg) -> list:
    rows = verify_expansions([int(v) for v in cfg["n_list"]], r=float(cfg["r"]), sigma2=float(cfg["sigma2"]))
    out = write_csv(cfg["out"], ["n", "exact_norm_gap", "expansion_gap_times_n", "orthogonality_residual"],
                    [[r.n, r.exact_norm_gap, r.expansion_gap_times_n, r.orthogonality_residual] for r in rows])
    for r in rows:
        print(f"n={r.n}: n*|exact - expansion| = {r.expansion_gap_times_n:.3e}")
    return [out]


def cmd_benchmark_eval(cfg) -> list:
    rep = benchmark_eval(int(cfg["l"]), int(cfg["draws"]), int(cfg["points"]), int(cfg["seed"]),
                         repeats=int(cfg["repeats"]))
    out = write_csv(cfg["out"], ["predictive", "eval_seconds", "bytes"],
                    [[k, rep.eval_seconds[k], rep.nbytes[k]] for k in ("mixture", "extended-plugin")])
    print(f"time ratio mixture/extended = {rep.time_ratio:.1f}, size ratio = {rep.size_ratio:.1f}")
    return [out]


COMMANDS = {"circle-risk": cmd_circle_risk, "spiked-risk": cmd_spiked_risk,
            "verify-expansion": cmd_verify_expansion, "benchmark-eval": cmd_benchmark_eval}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"bayesext {args.command}: error: {e}", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        outputs = COMMANDS[args.command](cfg)
    except NUMERICAL_ERRORS as e:
        print(f"bayesext {args.command}: numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    wall = time.perf_counter() - t0
    write_manifest(Path(cfg["out"]).with_suffix(".manifest.json"), args.command, cfg, cfg.get("seed"),
                   wall, outputs)
    return 0


if __name__ == "__main__":
    sys.exit(main())
