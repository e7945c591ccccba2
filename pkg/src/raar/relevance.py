"""Relevance functions over the target domain.

A relevance function maps target values to [0, 1] and is defined by control
points ``(y, rel, deriv)`` joined by cubic Hermite segments. With the default
zero derivatives every segment is a smoothstep between its endpoint relevances,
so it never overshoots them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateDistribution,
    DegenerateTarget,
    DuplicateControlPoint,
    InsufficientControlPoints,
    InvalidDomain,
    NonFiniteInput,
    RelevanceOutOfRange,
)

__all__ = [
    "ControlPoint",
    "RelevanceSpec",
    "build_relevance",
    "eval_relevance",
    "auto_relevance",
    "target_relevance",
    "load_control_points",
]


@dataclass(frozen=True)
class ControlPoint:
    y: float
    rel: float
    deriv: float = 0.0


@dataclass(frozen=True)
class RelevanceSpec:
    """Immutable piecewise cubic Hermite relevance function.

    ``coeffs[i]`` holds ``(c0, c1, c2, c3)`` of segment ``i`` in the local
    variable ``t = (y - y_i) / h_i``.
    """

    points: tuple[ControlPoint, ...]
    coeffs: np.ndarray

    @property
    def domain(self) -> tuple[float, float]:
        return self.points[0].y, self.points[-1].y

    @property
    def knots(self) -> np.ndarray:
        return np.array([p.y for p in self.points])

    def __call__(self, y):
        return eval_relevance(self, y)

    def to_dict(self) -> dict:
        return {"points": [{"y": p.y, "rel": p.rel, "deriv": p.deriv} for p in self.points]}


def _as_point(p) -> ControlPoint:
    if isinstance(p, ControlPoint):
        return p
    if isinstance(p, dict):
        return ControlPoint(float(p["y"]), float(p["rel"]), float(p.get("deriv", 0.0)))
    return ControlPoint(*(float(v) for v in p))


def build_relevance(points: Iterable) -> RelevanceSpec:
    """Build a relevance function through ``points``.

    Points may be :class:`ControlPoint` objects, ``(y, rel[, deriv])`` tuples
    or mappings; they are sorted by ``y``.

    Raises
    ------
    InsufficientControlPoints
        Fewer than two points.
    DuplicateControlPoint
        Two points share the same ``y``.
    RelevanceOutOfRange
        A relevance outside [0, 1].
    """
    pts = sorted((_as_point(p) for p in points), key=lambda p: p.y)
    if len(pts) < 2:
        raise InsufficientControlPoints(f"need at least 2 control points, got {len(pts)}")
    for p in pts:
        if not all(math.isfinite(v) for v in (p.y, p.rel, p.deriv)):
            raise NonFiniteInput(f"non-finite control point {p}")
        if not 0.0 <= p.rel <= 1.0:
            raise RelevanceOutOfRange(f"relevance {p.rel} at y={p.y} is outside [0, 1]")
    for a, b in zip(pts, pts[1:]):
        if a.y == b.y:
            raise DuplicateControlPoint(f"duplicate control point at y={a.y}")

    coeffs = np.empty((len(pts) - 1, 4))
    for i, (a, b) in enumerate(zip(pts, pts[1:])):
        h = b.y - a.y
        m0, m1 = a.deriv * h, b.deriv * h
        d = b.rel - a.rel
        # Hermite basis collected into powers of t.
        coeffs[i] = (a.rel, m0, 3.0 * d - 2.0 * m0 - m1, -2.0 * d + m0 + m1)
    return RelevanceSpec(points=tuple(pts), coeffs=coeffs)


def eval_relevance(spec: RelevanceSpec, y):
    """Evaluate ``spec`` at scalar or array ``y``.

    Outside the control-point domain the boundary relevance is held constant.
    Results are clipped to [0, 1], which only matters for user-supplied
    derivatives that make a segment overshoot.
    """
    arr = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput("relevance evaluated at a non-finite target value")
    knots = spec.knots
    flat = np.atleast_1d(arr).ravel()
    idx = np.clip(np.searchsorted(knots, flat, side="right") - 1, 0, len(knots) - 2)
    y0 = knots[idx]
    h = knots[idx + 1] - y0
    t = np.clip((flat - y0) / h, 0.0, 1.0)
    c = spec.coeffs[idx]
    out = c[:, 0] + t * (c[:, 1] + t * (c[:, 2] + t * c[:, 3]))
    # Exact values at the knots, free of rounding in the polynomial.
    rels = np.array([p.rel for p in spec.points])
    out = np.where(t == 0.0, rels[idx], out)
    out = np.where(t == 1.0, rels[idx + 1], out)
    out = np.clip(out, 0.0, 1.0)
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def auto_relevance(train_targets: Sequence[float], extreme: str = "right") -> RelevanceSpec:
    """Distribution-based relevance that marks boxplot extremes as relevant.

    The median gets relevance 0 and the adjacent value(s) ``Q3 + 1.5 IQR``
    (and ``Q1 - 1.5 IQR`` for ``extreme="both"``), capped at the observed
    extremes, get relevance 1. Quartiles use linear interpolation of the
    order statistics.
    """
    if extreme not in ("right", "both"):
        raise ValueError(f"extreme must be 'right' or 'both', got {extreme!r}")
    y = np.asarray(train_targets, dtype=float).ravel()
    if not np.all(np.isfinite(y)):
        raise NonFiniteInput("training targets contain non-finite values")
    if y.size < 5:
        raise DegenerateDistribution(f"need at least 5 target values, got {y.size}")
    lo, hi = float(y.min()), float(y.max())
    if lo == hi:
        raise DegenerateDistribution("all target values are equal")
    q1, med, q3 = (float(v) for v in np.quantile(y, [0.25, 0.5, 0.75], method="linear"))
    iqr = q3 - q1
    adj_hi = min(hi, q3 + 1.5 * iqr)
    adj_lo = max(lo, q1 - 1.5 * iqr)
    # Zero IQR collapses the fences onto the median; use the observed extreme.
    if adj_hi <= med:
        adj_hi = hi
    if adj_lo >= med:
        adj_lo = lo

    if adj_hi <= med:
        raise DegenerateDistribution("no spread above the median for a right extreme")
    points = [ControlPoint(med, 0.0), ControlPoint(adj_hi, 1.0)]
    if extreme == "both":
        if adj_lo >= med:
            raise DegenerateDistribution("no spread below the median for a left extreme")
        points.insert(0, ControlPoint(adj_lo, 1.0))
    return build_relevance(points)


def target_relevance(y_min: float, y_orig: float, y_target: float, y_max: float) -> RelevanceSpec:
    """Relevance centred on a single target value.

    Control points are ``(y_min, 0)``, ``(y_orig, 0.5)``, ``(y_target, 1)`` and
    ``(y_max, 0)``, all with zero slope. A target at or beyond a domain end
    drops that end's zero point, so relevance stays at 1 past the target.
    """
    vals = (y_min, y_orig, y_target, y_max)
    if not all(math.isfinite(v) for v in vals):
        raise NonFiniteInput("non-finite value passed to target_relevance")
    if not y_min <= y_orig <= y_max or y_min >= y_max:
        raise InvalidDomain(f"need y_min <= y_orig <= y_max with y_min < y_max, got {vals}")
    if y_target == y_orig:
        raise DegenerateTarget("target equals the original value")

    points = [ControlPoint(y_orig, 0.5), ControlPoint(y_target, 1.0)]
    occupied = {y_orig, y_target}
    if y_target > y_min and y_min not in occupied:
        points.append(ControlPoint(y_min, 0.0))
    if y_target < y_max and y_max not in occupied:
        points.append(ControlPoint(y_max, 0.0))
    return build_relevance(points)


def load_control_points(path) -> list[ControlPoint]:
    """Read control points from a CSV file with header ``y,rel[,deriv]``."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if "y" not in fields or "rel" not in fields:
            raise ValueError(f"{path}: control-point CSV needs columns 'y' and 'rel', got {fields}")
        points = []
        for row in reader:
            deriv = row.get("deriv")
            points.append(
                ControlPoint(float(row["y"]), float(row["rel"]), float(deriv) if deriv not in (None, "") else 0.0)
            )
    return points
