"""Recourse objectives and search bounds.

Each objective turns a predictor into a black-box score to maximize:

* ``max-y``: relative improvement ``(f(x) - y_orig) / |y_orig|``
* ``target-y``: ``-|f(x) - y_target| / |y_target - y_orig|``
* ``max-rel`` / ``target-rel``: relevance of the prediction, ``phi(f(x))``
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateTarget, MissingRelevance
from .relevance import RelevanceSpec, eval_relevance

log = logging.getLogger(__name__)

MODES = ("max-y", "target-y", "max-rel", "target-rel")


@dataclass
class ObjectiveSpec:
    mode: str
    y_orig: float
    predictor: Callable[[np.ndarray], float]
    y_target: Optional[float] = None
    relevance: Optional[RelevanceSpec] = None
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.mode.startswith("target"):
            if self.y_target is None:
                raise ValueError(f"mode {self.mode} needs y_target")
            if self.y_target == self.y_orig:
                raise DegenerateTarget("target equals the original prediction")
        if self.mode.endswith("rel") and self.relevance is None:
            raise MissingRelevance(f"mode {self.mode} needs a relevance function")


def max_y_objective(spec: ObjectiveSpec) -> Callable[[np.ndarray], float]:
    y0 = spec.y_orig
    if y0 == 0:
        log.warning("y_orig is 0; max-y objective falls back to the absolute difference")
        spec.flags.append("max_y_absolute_difference")
        return lambda x: spec.predictor(x) - y0
    scale = abs(y0)
    return lambda x: (spec.predictor(x) - y0) / scale


def target_y_objective(spec: ObjectiveSpec) -> Callable[[np.ndarray], float]:
    if spec.y_target is None or spec.y_target == spec.y_orig:
        raise DegenerateTarget("target-y objective needs y_target different from y_orig")
    target = spec.y_target
    scale = abs(target - spec.y_orig)
    return lambda x: -abs(spec.predictor(x) - target) / scale


def relevance_objective(spec: ObjectiveSpec) -> Callable[[np.ndarray], float]:
    if spec.relevance is None:
        raise MissingRelevance("relevance objective needs a relevance function")
    rel = spec.relevance

    def evaluate(x):
        y = spec.predictor(x)
        return eval_relevance(rel, y) if math.isfinite(y) else math.nan

    return evaluate


def make_objective(spec: ObjectiveSpec) -> Callable[[np.ndarray], float]:
    if spec.mode == "max-y":
        return max_y_objective(spec)
    if spec.mode == "target-y":
        return target_y_objective(spec)
    return relevance_objective(spec)


@dataclass(frozen=True)
class BoundsSpec:
    lower: np.ndarray
    upper: np.ndarray
    mutable: np.ndarray
    flags: tuple[str, ...] = ()

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(self.lower <= x) and np.all(x <= self.upper))

    def to_dict(self) -> dict:
        return {
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "mutable": self.mutable.tolist(),
        }


def build_bounds(x_orig, pct: float, ranges, mutable=None) -> BoundsSpec:
    """Search box of ``+-pct`` percent around each mutable feature value.

    The radius is ``pct/100 * |x_i|``, or ``pct/100`` of the range width when
    ``x_i`` is zero. Intervals are intersected with the training ranges;
    an empty intersection falls back to the full range. Immutable features
    are pinned to their original value.
    """
    x = np.asarray(x_orig, dtype=float).ravel()
    ranges = np.asarray(ranges, dtype=float).reshape(-1, 2)
    if not pct > 0:
        raise ValueError(f"bounds percentage must be positive, got {pct}")
    if len(ranges) != len(x):
        raise ValueError(f"{len(ranges)} ranges for {len(x)} features")
    mut = np.ones(len(x), dtype=bool) if mutable is None else np.asarray(mutable, dtype=bool).ravel()
    lo_r, hi_r = ranges[:, 0], ranges[:, 1]
    frac = pct / 100.0
    radius = np.where(x == 0, frac * (hi_r - lo_r), frac * np.abs(x))
    lower = np.maximum(x - radius, lo_r)
    upper = np.minimum(x + radius, hi_r)
    flags = []
    empty = lower > upper
    if np.any(empty & mut):
        for i in np.flatnonzero(empty & mut):
            log.warning("feature %d: bounds do not meet the training range; using the full range", i)
            flags.append(f"bounds_widened:{i}")
        lower = np.where(empty, lo_r, lower)
        upper = np.where(empty, hi_r, upper)
    lower = np.where(mut, lower, x)
    upper = np.where(mut, upper, x)
    return BoundsSpec(lower=lower, upper=upper, mutable=mut, flags=tuple(flags))
