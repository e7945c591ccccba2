"""Command-line interface: ``raar recourse``, ``raar relevance``, ``raar batch``.

Exit status is 0 on success, 1 on runtime errors and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .bayesopt import BoConfig
from .engine import RecourseRequest, generate_recourse
from .errors import ExperimentDegraded, PlanError, RaarError, RowOutOfRange
from .harness import ExperimentPlan, run_experiment, synthetic_plan
from .objectives import MODES
from .predictor import ANALYTIC, AnalyticPredictor, load_dataset, parse_model, synthetic_dataset
from .relevance import auto_relevance, build_relevance, eval_relevance, load_control_points

log = logging.getLogger("raar")

RECOURSE_DEFAULTS = {
    "row": 0,
    "model": "knn:5",
    "n_init": 8,
    "iters": 50,
    "lambda": 1.5,
    "candidates": 512,
    "relevance": None,
    "bounds_pct": None,
    "target_pct": None,
}


class UsageError(Exception):
    pass


def _default_seed() -> int:
    env = os.environ.get("RAAR_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"RAAR_SEED must be an integer, got {env!r}") from None


def _load_json_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def _effective(args, defaults: dict, skip=("command", "config", "func")) -> dict:
    merged = dict(defaults)
    if getattr(args, "config", None):
        merged.update(_load_json_config(args.config))
    merged.update({k: v for k, v in vars(args).items() if v is not None and k not in skip})
    return merged


def _write(path, text: str):
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)


def _check_row(row, ds) -> int:
    row = int(row)
    if not 0 <= row < ds.n:
        raise RowOutOfRange(f"row {row} outside dataset of {ds.n} rows")
    return row


def cmd_recourse(args) -> int:
    cfg = _effective(args, RECOURSE_DEFAULTS)
    if "seed" not in cfg:
        cfg["seed"] = _default_seed()
    if cfg["mode"] not in MODES:
        raise UsageError(f"unknown mode {cfg['mode']!r}; allowed: {', '.join(MODES)}")
    if cfg["mode"].startswith("target") and not cfg.get("target_pct"):
        raise UsageError(f"--target-pct is required (and nonzero) for mode {cfg['mode']}")
    if bool(cfg.get("data")) == bool(cfg.get("analytic")):
        raise UsageError("exactly one of --data or --analytic is required")

    if cfg.get("analytic"):
        pred = AnalyticPredictor(cfg["analytic"])
        ds = synthetic_dataset(cfg["analytic"], seed=cfg["seed"])
        ranges = pred.ranges
    else:
        if not cfg.get("target_col"):
            raise UsageError("--target-col is required with --data")
        ds = load_dataset(cfg["data"], cfg["target_col"])
        _check_row(cfg["row"], ds)
        pred = parse_model(cfg["model"], ds)
        ranges = ds.ranges
    row = _check_row(cfg["row"], ds)

    relevance = cfg["relevance"]
    if relevance and relevance not in ("auto", "auto-both", "target"):
        relevance = load_control_points(relevance)
    bo = BoConfig(
        n_init=int(cfg["n_init"]),
        n_iter=int(cfg["iters"]),
        lam=float(cfg["lambda"]),
        n_candidates=int(cfg["candidates"]),
        seed=int(cfg["seed"]),
    )
    req = RecourseRequest(
        predictor=pred,
        x_orig=ds.features[row],
        mode=cfg["mode"],
        ranges=ranges,
        config=bo,
        target_pct=cfg["target_pct"],
        bounds_pct=cfg["bounds_pct"],
        train_targets=ds.target,
        relevance=relevance,
    )
    with pred:
        result = generate_recourse(req)
    result.config["cli"] = {k: v for k, v in sorted(cfg.items()) if k != "out"}
    text = result.to_json()
    if cfg.get("out"):
        _write(cfg["out"], text)
        if cfg.get("trace"):
            _write(Path(cfg["out"]).with_suffix(".trace.csv"), result.trace_csv(ds.feature_names))
    sys.stdout.write(text)
    return 0


def cmd_relevance(args) -> int:
    if args.control_points:
        spec = build_relevance(load_control_points(args.control_points))
    else:
        if not (args.data and args.target_col and args.auto):
            raise UsageError("give --control-points, or --data, --target-col and --auto")
        ds = load_dataset(args.data, args.target_col)
        spec = auto_relevance(ds.target, args.auto)
    if args.grid < 2:
        raise UsageError("--grid must be at least 2")
    lo, hi = spec.domain
    ys = np.linspace(lo, hi, args.grid)
    phi = eval_relevance(spec, ys)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["y", "phi"])
    for y, p in zip(ys, phi):
        w.writerow([repr(float(y)), repr(float(p))])
    if args.out:
        _write(args.out, buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return 0


def cmd_batch(args) -> int:
    if bool(args.config) == bool(args.suite):
        raise UsageError("exactly one of --config or --suite is required")
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    try:
        plan = ExperimentPlan.load(args.config) if args.config else synthetic_plan()
    except PlanError as exc:
        raise UsageError(str(exc)) from None
    try:
        report = run_experiment(plan, args.out_dir, workers=args.workers)
    except ExperimentDegraded as exc:
        print(f"raar: ExperimentDegraded: {exc}", file=sys.stderr)
        return 1
    n = sum(a["n_runs"] for a in report["arms"])
    print(f"wrote {n} runs to {args.out_dir}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="raar", description="Relevance-aware algorithmic recourse.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("recourse", help="generate one counterfactual")
    p.add_argument("--config", help="JSON file of defaults; explicit flags win")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--data", help="CSV dataset")
    src.add_argument("--analytic", choices=sorted(ANALYTIC), help="built-in analytic predictor")
    p.add_argument("--target-col")
    p.add_argument("--row", type=int)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--target-pct", type=float)
    p.add_argument("--bounds-pct", type=float)
    p.add_argument("--iters", type=int, help="BO iterations after the initial design")
    p.add_argument("--n-init", type=int)
    p.add_argument("--candidates", type=int, help="acquisition candidates per iteration")
    p.add_argument("--lambda", type=float, dest="lambda", help="UCB exploration weight")
    p.add_argument("--seed", type=int, help="defaults to $RAAR_SEED, else 0")
    p.add_argument("--model", help="knn:<k> or external:<command>")
    p.add_argument("--relevance", help="auto, auto-both, target, or a control-point CSV")
    p.add_argument("--out", help="also write the result JSON here")
    p.add_argument("--trace", action="store_const", const=True, help="with --out, write <out>.trace.csv")
    p.set_defaults(func=cmd_recourse)

    p = sub.add_parser("relevance", help="sample a relevance function as y,phi CSV")
    p.add_argument("--data")
    p.add_argument("--target-col")
    p.add_argument("--auto", choices=("right", "both"))
    p.add_argument("--control-points", help="CSV with header y,rel[,deriv]")
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--out")
    p.set_defaults(func=cmd_relevance)

    p = sub.add_parser("batch", help="run an experiment plan")
    p.add_argument("--config", help="experiment plan JSON")
    p.add_argument("--suite", choices=("synthetic",), help="built-in plan")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_batch)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="raar: %(message)s")
    try:
        if args.command == "recourse" and "mode" not in _effective(args, {}):
            raise UsageError(f"--mode is required; allowed: {', '.join(MODES)}")
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"raar: error: {exc}", file=sys.stderr)
        return 2
    except (RaarError, OSError, ValueError) as exc:
        print(f"raar: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
