"""Single-instance recourse generation."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .bayesopt import BoConfig, BoTrace, run_bo
from .errors import DeterminismError, DimensionError, MissingRelevance
from .objectives import BoundsSpec, ObjectiveSpec, build_bounds, make_objective
from .predictor import Predictor
from .relevance import (
    ControlPoint,
    RelevanceSpec,
    auto_relevance,
    build_relevance,
    eval_relevance,
    target_relevance,
)
from .surrogate import DEFAULT_LENGTH_SCALE, LENGTH_SCALE_FLOOR, MAX_JITTER

log = logging.getLogger(__name__)

DEFAULT_BOUNDS_PCT = {"max": 5.0, "target": 100.0}

RelevanceSource = Union[str, RelevanceSpec, Sequence[ControlPoint], None]


@dataclass
class RecourseRequest:
    """Everything needed to generate one counterfactual.

    ``relevance`` is ``"auto"`` (right-extreme, from ``train_targets``),
    ``"auto-both"``, ``"target"`` (centred on the target value), explicit
    control points, a built :class:`RelevanceSpec`, or ``None`` for the mode
    default: ``"auto"`` for max modes and ``"target"`` for target modes. For
    y-modes the relevance is only used to report ``phi_cf``.
    """

    predictor: Predictor
    x_orig: np.ndarray
    mode: str
    ranges: np.ndarray
    config: BoConfig = field(default_factory=BoConfig)
    target_pct: Optional[float] = None
    bounds_pct: Optional[float] = None
    train_targets: Optional[np.ndarray] = None
    relevance: RelevanceSource = None
    mutable: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x_orig = np.asarray(self.x_orig, dtype=float).ravel()
        self.ranges = np.asarray(self.ranges, dtype=float).reshape(-1, 2)
        if self.mode.startswith("target") and not self.target_pct:
            raise ValueError(f"mode {self.mode} needs a nonzero target percentage")

    @property
    def family(self) -> str:
        return self.mode.split("-")[0]


@dataclass
class RecourseResult:
    x_orig: np.ndarray
    y_orig: float
    y_target: Optional[float]
    x_cf: np.ndarray
    y_cf: float
    delta_y_pct: float
    phi_cf: Optional[float]
    cost: float
    iters_to_recourse: int
    trace: BoTrace
    config: dict
    flags: list[str] = field(default_factory=list)

    def to_dict(self, include_trace: bool = True) -> dict:
        d = {
            "x_orig": self.x_orig.tolist(),
            "y_orig": self.y_orig,
            "y_target": self.y_target,
            "x_cf": self.x_cf.tolist(),
            "y_cf": self.y_cf,
            "delta_y_pct": self.delta_y_pct,
            "phi_cf": self.phi_cf,
            "cost": self.cost,
            "iters_to_recourse": self.iters_to_recourse,
            "flags": list(self.flags),
            "config": self.config,
        }
        if include_trace:
            d["trace"] = {
                "steps": [
                    {
                        "x": s.x.tolist(),
                        "objective": s.objective,
                        "best_so_far": s.best_so_far,
                        "flagged": s.flagged,
                    }
                    for s in self.trace.steps
                ],
                "best_x": self.trace.best_x.tolist(),
                "best_value": self.trace.best_value,
            }
        return _finite_or_null(d)

    def to_json(self, include_trace: bool = True) -> str:
        return json.dumps(self.to_dict(include_trace), indent=2, allow_nan=False) + "\n"

    def trace_csv(self, feature_names: Sequence[str] | None = None) -> str:
        d = len(self.x_orig)
        names = list(feature_names) if feature_names else [f"x{i}" for i in range(d)]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "objective", "best_so_far", *names])
        for i, s in enumerate(self.trace.steps, start=1):
            w.writerow([i, repr(s.objective), repr(s.best_so_far), *(repr(float(v)) for v in s.x)])
        return buf.getvalue()


def _finite_or_null(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite_or_null(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite_or_null(v) for v in obj]
    return obj


def cost(x_orig, x_cf, ranges, flags: list | None = None) -> float:
    """Euclidean norm of the feature change, each coordinate divided by its range width.

    Zero-width features are skipped.
    """
    a = np.asarray(x_orig, dtype=float).ravel()
    b = np.asarray(x_cf, dtype=float).ravel()
    r = np.asarray(ranges, dtype=float).reshape(-1, 2)
    if not len(a) == len(b) == len(r):
        raise DimensionError("cost needs matching dimensions")
    width = r[:, 1] - r[:, 0]
    ok = width > 0
    if not np.all(ok):
        log.warning("cost skips zero-width features %s", np.flatnonzero(~ok).tolist())
        if flags is not None:
            flags.extend(f"cost_skipped_feature:{i}" for i in np.flatnonzero(~ok))
    diff = (b[ok] - a[ok]) / width[ok]
    return float(np.sqrt(np.sum(diff * diff)))


def iterations_to_recourse(trace: BoTrace, tol: float = 1e-9) -> int:
    """1-based index of the first step whose best-so-far is within ``tol`` of the final one."""
    best = trace.best_so_far
    if best.size == 0:
        raise ValueError("empty trace")
    final = best[-1]
    if not math.isfinite(final):
        return 1
    hits = np.flatnonzero(np.abs(best - final) <= tol)
    return int(hits[0]) + 1


def resolve_relevance(req: RecourseRequest, y_orig: float, y_target: Optional[float]) -> Optional[RelevanceSpec]:
    source = req.relevance
    if source is None:
        source = "target" if req.family == "target" else "auto"
    if isinstance(source, RelevanceSpec):
        return source
    if not isinstance(source, str):
        return build_relevance(source)

    needed = req.mode.endswith("rel")
    if req.train_targets is None:
        if needed:
            raise MissingRelevance(f"relevance source {source!r} needs training targets")
        return None
    targets = np.asarray(req.train_targets, dtype=float)
    if source in ("auto", "auto-right", "auto-both"):
        extreme = "both" if source == "auto-both" else "right"
        if needed:
            return auto_relevance(targets, extreme)
        try:
            return auto_relevance(targets, extreme)
        except ValueError:
            return None
    if source == "target":
        if y_target is None:
            if needed:
                raise MissingRelevance("target relevance needs a target value")
            return None
        y_min = min(float(targets.min()), y_orig)
        y_max = max(float(targets.max()), y_orig)
        return target_relevance(y_min, y_orig, y_target, y_max)
    raise ValueError(f"unknown relevance source {source!r}")


class _Recorder:
    """Wraps a predictor and remembers predictions in call order."""

    def __init__(self, predictor):
        self.predictor = predictor
        self.values: list[float] = []

    def __call__(self, x):
        y = self.predictor(x)
        self.values.append(y)
        return y


def generate_recourse(req: RecourseRequest) -> RecourseResult:
    pred = req.predictor
    if len(req.x_orig) != pred.dim:
        raise DimensionError(f"instance has {len(req.x_orig)} features, predictor expects {pred.dim}")
    flags: list[str] = []
    y_orig = float(pred(req.x_orig))
    y_target = y_orig * (1.0 + req.target_pct / 100.0) if req.family == "target" else None

    pct = req.bounds_pct if req.bounds_pct is not None else DEFAULT_BOUNDS_PCT[req.family]
    bounds = build_bounds(req.x_orig, pct, req.ranges, req.mutable)
    flags.extend(bounds.flags)

    rel = resolve_relevance(req, y_orig, y_target)
    recorder = _Recorder(pred)
    spec = ObjectiveSpec(req.mode, y_orig, recorder, y_target=y_target, relevance=rel)
    objective = make_objective(spec)
    trace = run_bo(objective, bounds, req.config)
    flags.extend(spec.flags)
    if any(s.flagged for s in trace.steps):
        flags.append("non_finite_objective")

    best_idx = next(i for i, s in enumerate(trace.steps) if s.best_so_far == trace.best_value)
    x_cf = trace.best_x
    y_cf = float(pred(x_cf))
    seen = recorder.values[best_idx]
    if y_cf != seen and not (math.isnan(y_cf) and math.isnan(seen)):
        raise DeterminismError(
            f"predictor returned {y_cf!r} on re-evaluation, {seen!r} during search"
        )
    if y_orig != 0:
        delta = 100.0 * (y_cf - y_orig) / abs(y_orig)
    else:
        delta = math.nan
        flags.append("delta_y_pct_undefined")

    config = {
        "mode": req.mode,
        "target_pct": req.target_pct,
        "bounds_pct": pct,
        "bo": req.config.to_dict(),
        "predictor": pred.describe(),
        "bounds": bounds.to_dict(),
        "surrogate": {
            "kernel": "matern",
            "nu": 2.5,
            "signal_variance": 1.0,
            "jitter": req.config.jitter,
            "max_jitter": MAX_JITTER,
            "length_scale_rule": "median_pairwise_distance",
            "length_scale_floor": LENGTH_SCALE_FLOOR,
            "length_scale_default": DEFAULT_LENGTH_SCALE,
            "final_length_scale": trace.length_scales[-1] if trace.length_scales else None,
        },
        "relevance": rel.to_dict() if rel is not None else None,
    }
    return RecourseResult(
        x_orig=req.x_orig.copy(),
        y_orig=y_orig,
        y_target=y_target,
        x_cf=x_cf.copy(),
        y_cf=y_cf,
        delta_y_pct=delta,
        phi_cf=eval_relevance(rel, y_cf) if rel is not None else None,
        cost=cost(req.x_orig, x_cf, req.ranges, flags),
        iters_to_recourse=iterations_to_recourse(trace),
        trace=trace,
        config=config,
        flags=flags,
    )
