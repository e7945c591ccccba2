"""Batch experiments comparing y-optimized and relevance-optimized recourse.

A plan sweeps datasets x instances x comparisons x target percentages. Each
comparison pairs a y arm with a relevance arm; both arms of a pair share the
instance and the seed. Outputs:

``report.json``
    plan echo, per-arm statistics, paired deltas and per-run rows.
``runs.csv``
    one row per run.
``boxplot_iters.csv`` / ``boxplot_dist.csv``
    per-instance paired percentage differences in iterations and cost.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Optional

import jsonschema
import numpy as np

from .bayesopt import BoConfig
from .engine import RecourseRequest, generate_recourse
from .errors import ExperimentDegraded, PlanError, RaarError
from .predictor import (
    ANALYTIC,
    SYNTHETIC_SUITE,
    AnalyticPredictor,
    load_dataset,
    parse_model,
    synthetic_dataset,
)

log = logging.getLogger(__name__)

RUN_COLUMNS = ["dataset", "instance", "arm", "mode", "target_pct", "delta_y_pct", "phi", "cost", "iters", "seed"]
BOX_COLUMNS = ["dataset", "instance", "comparison", "target_pct", "diff_pct"]
MASK64 = (1 << 64) - 1

PLAN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["datasets"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "datasets": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name"],
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "analytic": {"type": "string", "enum": sorted(ANALYTIC)},
                    "csv": {"type": "string"},
                    "target_col": {"type": "string"},
                    "model": {"type": "string", "pattern": "^(knn:[0-9]+|external:.+)$"},
                    "train_size": {"type": "integer", "minimum": 5},
                },
                "oneOf": [
                    {"required": ["analytic"], "not": {"required": ["csv"]}},
                    {"required": ["csv", "target_col", "model"], "not": {"required": ["analytic"]}},
                ],
            },
        },
        "instances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "count": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "comparisons": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name", "y_mode", "rel_mode"],
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "y_mode": {"enum": ["max-y", "target-y", "max-rel", "target-rel"]},
                    "rel_mode": {"enum": ["max-y", "target-y", "max-rel", "target-rel"]},
                },
            },
        },
        "target_pcts": {"type": "array", "items": {"type": "number", "not": {"const": 0}}},
        "bounds_pct": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max": {"type": "number", "exclusiveMinimum": 0},
                "target": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "relevance": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max": {"enum": ["auto", "auto-both"]},
                "target": {"enum": ["target", "auto", "auto-both"]},
            },
        },
        "bo": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_init": {"type": "integer", "minimum": 1},
                "n_iter": {"type": "integer", "minimum": 0},
                "lambda": {"type": "number", "minimum": 0},
                "n_candidates": {"type": "integer", "minimum": 1},
                "jitter": {"type": "number", "minimum": 1e-12},
            },
        },
    },
}


@dataclass(frozen=True)
class Comparison:
    name: str
    y_mode: str
    rel_mode: str

    @property
    def family(self) -> str:
        return self.y_mode.split("-")[0]


DEFAULT_COMPARISONS = (
    Comparison("max", "max-y", "max-rel"),
    Comparison("target", "target-y", "target-rel"),
)


@dataclass
class ExperimentPlan:
    datasets: list[dict]
    seed: int = 0
    instance_count: int = 20
    instance_seed: int = 0
    comparisons: tuple[Comparison, ...] = DEFAULT_COMPARISONS
    target_pcts: tuple[float, ...] = (10, 20, 50, 100)
    bounds_pct: dict = field(default_factory=lambda: {"max": 5.0, "target": 100.0})
    relevance: dict = field(default_factory=lambda: {"max": "auto", "target": "target"})
    bo: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        validator = jsonschema.Draft202012Validator(PLAN_SCHEMA)
        errors = sorted(validator.iter_errors(d), key=lambda e: list(e.absolute_path))
        if errors:
            err = errors[0]
            path = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
            raise PlanError(err.message, path)
        comps = d.get("comparisons")
        for i, c in enumerate(comps or []):
            if c["y_mode"].split("-")[0] != c["rel_mode"].split("-")[0]:
                raise PlanError("both arms of a comparison must share max or target family", f"$.comparisons[{i}]")
        names = [ds["name"] for ds in d["datasets"]]
        if len(set(names)) != len(names):
            raise PlanError("dataset names must be unique", "$.datasets")
        inst = d.get("instances", {})
        return cls(
            datasets=[dict(ds) for ds in d["datasets"]],
            seed=d.get("seed", 0),
            instance_count=inst.get("count", 20),
            instance_seed=inst.get("seed", 0),
            comparisons=tuple(Comparison(**c) for c in comps) if comps else DEFAULT_COMPARISONS,
            target_pcts=tuple(d.get("target_pcts", (10, 20, 50, 100))),
            bounds_pct={"max": 5.0, "target": 100.0, **d.get("bounds_pct", {})},
            relevance={"max": "auto", "target": "target", **d.get("relevance", {})},
            bo=dict(d.get("bo", {})),
        )

    @classmethod
    def load(cls, path) -> "ExperimentPlan":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise PlanError(f"cannot read plan: {exc}", str(path)) from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise PlanError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", str(path)) from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "datasets": self.datasets,
            "instances": {"count": self.instance_count, "seed": self.instance_seed},
            "comparisons": [asdict(c) for c in self.comparisons],
            "target_pcts": list(self.target_pcts),
            "bounds_pct": dict(self.bounds_pct),
            "relevance": dict(self.relevance),
            "bo": self.bo_config(0).to_dict() | {"seed": "per-run"},
        }

    def bo_config(self, seed: int) -> BoConfig:
        return BoConfig.from_dict({**self.bo, "seed": seed})


def synthetic_plan(instances: int = 20, seed: int = 0) -> ExperimentPlan:
    """Built-in suite: three analytic predictors, both comparisons, four targets."""
    return ExperimentPlan(
        datasets=[{"name": n, "analytic": n} for n in SYNTHETIC_SUITE],
        seed=seed,
        instance_count=instances,
    )


def stable_hash(*parts) -> int:
    """64-bit hash of ``parts`` that does not depend on the interpreter session."""
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def run_seed(base_seed: int, dataset: str, instance: int, pair: str) -> int:
    return (base_seed ^ stable_hash(dataset, instance, pair)) & MASK64


@dataclass(frozen=True)
class RunSpec:
    dataset: dict
    instance: int
    comparison: str
    arm: str  # "y" or "rel"
    mode: str
    target_pct: Optional[float]
    seed: int


@lru_cache(maxsize=32)
def _resolve(entry_json: str, plan_seed: int):
    entry = json.loads(entry_json)
    if "analytic" in entry:
        pred = AnalyticPredictor(entry["analytic"])
        ds = synthetic_dataset(
            entry["analytic"], n=entry.get("train_size", 200), seed=plan_seed ^ stable_hash("train", entry["name"])
        )
        return pred, ds, pred.ranges
    ds = load_dataset(entry["csv"], entry["target_col"])
    return parse_model(entry["model"], ds), ds, ds.ranges


def instance_indices(plan: ExperimentPlan, entry: dict) -> list[int]:
    _, ds, _ = _resolve(json.dumps(entry, sort_keys=True), plan.seed)
    count = min(plan.instance_count, ds.n)
    rng = np.random.default_rng((plan.instance_seed ^ stable_hash("instances", entry["name"])) & MASK64)
    return [int(i) for i in rng.choice(ds.n, size=count, replace=False)]


def run_single(plan: ExperimentPlan, spec: RunSpec) -> dict:
    """Execute one run; failures come back as rows with an ``error`` field."""
    row = {
        "dataset": spec.dataset["name"],
        "instance": spec.instance,
        "comparison": spec.comparison,
        "arm": spec.arm,
        "mode": spec.mode,
        "target_pct": spec.target_pct,
        "seed": spec.seed,
    }
    family = spec.mode.split("-")[0]
    try:
        pred, ds, ranges = _resolve(json.dumps(spec.dataset, sort_keys=True), plan.seed)
        req = RecourseRequest(
            predictor=pred,
            x_orig=ds.features[spec.instance],
            mode=spec.mode,
            ranges=ranges,
            config=plan.bo_config(spec.seed),
            target_pct=spec.target_pct,
            bounds_pct=plan.bounds_pct[family],
            train_targets=ds.target,
            relevance=plan.relevance[family],
        )
        res = generate_recourse(req)
    except (RaarError, ValueError, ArithmeticError) as exc:
        row.update(error=f"{type(exc).__name__}: {exc}", delta_y_pct=None, phi=None, cost=None, iters=None)
        return row
    row.update(
        error=None,
        y_orig=res.y_orig,
        y_cf=res.y_cf,
        delta_y_pct=res.delta_y_pct if math.isfinite(res.delta_y_pct) else None,
        phi=res.phi_cf,
        cost=res.cost,
        iters=res.iters_to_recourse,
        flags=res.flags,
    )
    return row


def plan_runs(plan: ExperimentPlan) -> list[RunSpec]:
    specs = []
    for entry in plan.datasets:
        for inst in instance_indices(plan, entry):
            for comp in plan.comparisons:
                pcts = plan.target_pcts if comp.family == "target" else (None,)
                for pct in pcts:
                    seed = run_seed(plan.seed, entry["name"], inst, f"{comp.name}|{pct}")
                    for arm, mode in (("y", comp.y_mode), ("rel", comp.rel_mode)):
                        specs.append(RunSpec(entry, inst, comp.name, arm, mode, pct, seed))
    return specs


def _run_single_star(args):
    return run_single(*args)


def _mean(v):
    return statistics.fmean(v) if v else None


def _sd(v, flags, what):
    if len(v) >= 2:
        return statistics.stdev(v)
    if len(v) == 1:
        flags.append(f"single_row_sd:{what}")
        return 0.0
    return None


def _rel_delta(rel_mean, y_mean, flags, what):
    if rel_mean is None or y_mean is None:
        return None
    if y_mean == 0:
        flags.append(f"zero_denominator:{what}")
        return None
    return 100.0 * (rel_mean - y_mean) / y_mean


def _arm_stats(rows: list[dict]) -> dict:
    ok = [r for r in rows if r["error"] is None]
    flags: list[str] = []
    dy = [r["delta_y_pct"] for r in ok if r["delta_y_pct"] is not None]
    phi = [r["phi"] for r in ok if r["phi"] is not None]
    return {
        "n_runs": len(rows),
        "n_failed": len(rows) - len(ok),
        "delta_y_pct_mean": _mean(dy),
        "delta_y_pct_sd": _sd(dy, flags, "delta_y_pct"),
        "phi_mean": _mean(phi),
        "phi_sd": _sd(phi, flags, "phi"),
        "cost_mean": _mean([r["cost"] for r in ok]),
        "iters_mean": _mean([r["iters"] for r in ok]),
        "flags": flags,
    }


def _pair_up(rows: list[dict]):
    """Map (dataset, comparison, target_pct, instance) to its two arms, keeping complete pairs."""
    by_key: dict[tuple, dict] = {}
    for r in rows:
        if r["error"] is None:
            by_key.setdefault((r["dataset"], r["comparison"], r["target_pct"], r["instance"]), {})[r["arm"]] = r
    return {k: v for k, v in by_key.items() if "y" in v and "rel" in v}


def _paired_deltas(pairs: list[dict]) -> dict:
    flags: list[str] = []
    out = {"n_pairs": len(pairs)}
    for label, key in (("delta_it_pct", "iters"), ("delta_d_pct", "cost")):
        y = _mean([p["y"][key] for p in pairs])
        rel = _mean([p["rel"][key] for p in pairs])
        out[label] = _rel_delta(rel, y, flags, label)
    out["flags"] = flags
    return out


def aggregate(rows: list[dict]) -> dict:
    """Per-arm statistics and paired relative deltas over complete pairs.

    Deltas are ``100 * (mean_rel - mean_y) / mean_y``, so negative values mean
    the relevance arm needed fewer iterations or a cheaper change. Scopes with
    ``"*"`` pool over datasets and/or target percentages.
    """
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["dataset"], r["comparison"], r["target_pct"], r["arm"], r["mode"]), []).append(r)
    arms = []
    for (ds, comp, pct, arm, mode), rs in groups.items():
        arms.append({"dataset": ds, "comparison": comp, "target_pct": pct, "arm": arm, "mode": mode, **_arm_stats(rs)})

    pairs = _pair_up(rows)
    scopes: dict[tuple, list[dict]] = {}
    for (ds, comp, pct, _), p in pairs.items():
        for key in ((ds, comp, pct), ("*", comp, pct), ("*", comp, "*")):
            scopes.setdefault(key, []).append(p)
    comparisons = [
        {"dataset": ds, "comparison": comp, "target_pct": pct, **_paired_deltas(ps)}
        for (ds, comp, pct), ps in scopes.items()
    ]

    degraded = [a for a in arms if a["n_runs"] and a["n_failed"] / a["n_runs"] > 0.5]
    return {
        "arms": arms,
        "comparisons": comparisons,
        "degraded": bool(degraded),
        "degraded_arms": [
            {k: a[k] for k in ("dataset", "comparison", "target_pct", "arm")} for a in degraded
        ],
    }


def box_rows(rows: list[dict], key: str) -> list[dict]:
    out = []
    for (ds, comp, pct, inst), p in _pair_up(rows).items():
        y = p["y"][key]
        if y:
            out.append(
                {"dataset": ds, "instance": inst, "comparison": comp, "target_pct": pct,
                 "diff_pct": 100.0 * (p["rel"][key] - y) / y}
            )
    return out


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv(rows: list[dict], columns: list[str], arm_label=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(arm_label(r) if c == "arm" and arm_label else r.get(c)) for c in columns])
    return buf.getvalue()


def _finite_or_null(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite_or_null(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite_or_null(v) for v in obj]
    return obj


def render_outputs(plan: ExperimentPlan, rows: list[dict]) -> dict[str, str]:
    report = {"plan": plan.to_dict(), **aggregate(rows), "runs": rows}
    return {
        "report.json": json.dumps(_finite_or_null(report), indent=2, allow_nan=False) + "\n",
        "runs.csv": _csv(rows, RUN_COLUMNS, arm_label=lambda r: f"{r['comparison']}/{r['arm']}"),
        "boxplot_iters.csv": _csv(box_rows(rows, "iters"), BOX_COLUMNS),
        "boxplot_dist.csv": _csv(box_rows(rows, "cost"), BOX_COLUMNS),
    }


def check_out_dir(out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".raar-write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from None
    return out


def execute(plan: ExperimentPlan, workers: int = 1) -> list[dict]:
    specs = plan_runs(plan)
    if workers <= 1 or len(specs) <= 1:
        return [run_single(plan, s) for s in specs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_single_star, [(plan, s) for s in specs], chunksize=4))


def run_experiment(plan: ExperimentPlan, out_dir=None, workers: int = 1) -> dict:
    """Run every planned recourse, write the report files, return the report.

    Raises :class:`ExperimentDegraded` after writing when more than half the
    runs of any arm failed.
    """
    out = check_out_dir(out_dir) if out_dir is not None else None
    rows = execute(plan, workers)
    files = render_outputs(plan, rows)
    if out is not None:
        for name, text in files.items():
            (out / name).write_text(text)
    report = json.loads(files["report.json"])
    if report["degraded"]:
        raise ExperimentDegraded(f"more than half the runs failed in {report['degraded_arms']}")
    return report
