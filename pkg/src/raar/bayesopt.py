"""Bayesian optimization loop: GP surrogate plus UCB candidate search."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .objectives import BoundsSpec
from .errors import IllConditionedKernel
from .surrogate import GpModel, KernelParams, fit_gp, median_length_scale


@dataclass(frozen=True)
class BoConfig:
    n_init: int = 8
    n_iter: int = 50
    lam: float = 1.5
    n_candidates: int = 512
    seed: int = 0
    jitter: float = 1e-10

    def __post_init__(self):
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")
        if self.n_iter < 0:
            raise ValueError("n_iter must be >= 0")
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BoConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return cls(**d)


@dataclass(frozen=True)
class BoStep:
    x: np.ndarray
    objective: float
    best_so_far: float
    flagged: bool = False


@dataclass
class BoTrace:
    steps: list[BoStep] = field(default_factory=list)
    best_x: np.ndarray | None = None
    best_value: float = -math.inf
    length_scales: list[float] = field(default_factory=list)

    @property
    def best_so_far(self) -> np.ndarray:
        return np.array([s.best_so_far for s in self.steps])


def ucb(mu, sigma, lam: float):
    """Upper confidence bound ``mu + lam * sigma``."""
    return mu + lam * sigma


def _to_unit(x: np.ndarray, bounds: BoundsSpec) -> np.ndarray:
    width = bounds.upper - bounds.lower
    safe = np.where(width > 0, width, 1.0)
    return np.where(width > 0, (x - bounds.lower) / safe, 0.0)


def _from_unit(u: np.ndarray, bounds: BoundsSpec) -> np.ndarray:
    x = bounds.lower + u * (bounds.upper - bounds.lower)
    return np.clip(x, bounds.lower, bounds.upper)


def initial_design(bounds: BoundsSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Latin-stratified sample of ``n`` points inside ``bounds``."""
    d = bounds.dim
    u = np.empty((n, d))
    for j in range(d):
        u[:, j] = (rng.permutation(n) + rng.random(n)) / n
    return _from_unit(u, bounds)


def propose_next(model: GpModel | None, bounds: BoundsSpec, config: BoConfig, rng: np.random.Generator) -> np.ndarray:
    """Return the UCB-maximizing point among uniform random candidates.

    Ties go to the lowest candidate index. Without a model (no finite
    observations yet) the first candidate is returned.
    """
    u = rng.random((config.n_candidates, bounds.dim))
    cand = _from_unit(u, bounds)
    if model is None:
        return cand[0]
    mu, sigma = model.posterior(_to_unit(cand, bounds))
    return cand[int(np.argmax(ucb(mu, sigma, config.lam)))]


def _fit(history_u, history_v, config: BoConfig):
    finite = [(u, v) for u, v in zip(history_u, history_v) if math.isfinite(v)]
    if not finite:
        return None, None
    ls = median_length_scale(np.array([u for u, _ in finite]))
    try:
        return fit_gp(finite, KernelParams(length_scale=ls, jitter=config.jitter)), ls
    except IllConditionedKernel:
        # Fall back to a random candidate for this round.
        return None, ls


def run_bo(objective: Callable[[np.ndarray], float], bounds: BoundsSpec, config: BoConfig) -> BoTrace:
    """Maximize ``objective`` over ``bounds``.

    A Latin-stratified initial design of ``n_init`` points is followed by
    ``n_iter`` rounds of refit, propose, evaluate. Non-finite objective values
    rank as ``-inf``, are flagged, and are left out of the surrogate fit.
    """
    rng = np.random.default_rng(config.seed)
    trace = BoTrace()
    hist_u: list[np.ndarray] = []
    hist_v: list[float] = []

    def record(x):
        x = np.asarray(x, dtype=float)
        v = float(objective(x))
        flagged = not math.isfinite(v)
        if flagged:
            v = -math.inf
        if trace.best_x is None or v > trace.best_value:
            trace.best_x = x.copy()
            trace.best_value = v
        trace.steps.append(BoStep(x.copy(), v, trace.best_value, flagged))
        hist_u.append(_to_unit(x, bounds))
        hist_v.append(v)

    for x in initial_design(bounds, config.n_init, rng):
        record(x)
    for _ in range(config.n_iter):
        model, ls = _fit(hist_u, hist_v, config)
        if ls is not None:
            trace.length_scales.append(ls)
        record(propose_next(model, bounds, config, rng))
    return trace
