"""Gaussian process surrogate with a Matern (nu = 5/2) covariance.

Inputs are expected in the normalized unit box, targets are standardized per
fit. The kernel uses the closed form of the half-integer Matern kernel, which
avoids evaluating Bessel functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist, pdist

from .errors import IllConditionedKernel, InvalidDistance, NonFiniteInput

SQRT5 = math.sqrt(5.0)
MAX_JITTER = 1e-4
# Squared pivot ratio of the Cholesky factor above which the Gram matrix is
# treated as numerically singular.
MAX_CONDITION = 1e10
LENGTH_SCALE_FLOOR = 1e-3
# Length scale used when the history has fewer than two distinct inputs.
DEFAULT_LENGTH_SCALE = 1.0


@dataclass(frozen=True)
class KernelParams:
    length_scale: float = DEFAULT_LENGTH_SCALE
    signal_variance: float = 1.0
    jitter: float = 1e-10
    nu: float = 2.5

    def __post_init__(self):
        if not self.length_scale > 0:
            raise ValueError(f"length_scale must be positive, got {self.length_scale}")
        if not self.signal_variance > 0:
            raise ValueError(f"signal_variance must be positive, got {self.signal_variance}")
        if not self.jitter >= 1e-12:
            raise ValueError(f"jitter must be at least 1e-12, got {self.jitter}")
        if self.nu != 2.5:
            raise ValueError("only nu = 2.5 is supported")


def matern25(distance, params: KernelParams):
    """Matern 5/2 covariance at ``distance`` (scalar or array)."""
    r = np.asarray(distance, dtype=float)
    if np.any(r < 0):
        raise InvalidDistance("distance must be nonnegative")
    z = SQRT5 * r / params.length_scale
    k = params.signal_variance * (1.0 + z + z * z / 3.0) * np.exp(-z)
    return float(k) if k.ndim == 0 else k


def median_length_scale(inputs: np.ndarray) -> float:
    """Median pairwise Euclidean distance of ``inputs``, floored."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    if len(inputs) < 2:
        return DEFAULT_LENGTH_SCALE
    d = pdist(inputs)
    d = d[d > 0]
    if d.size == 0:
        return DEFAULT_LENGTH_SCALE
    return max(float(np.median(d)), LENGTH_SCALE_FLOOR)


@dataclass(frozen=True)
class GpModel:
    inputs: np.ndarray
    targets: np.ndarray  # standardized
    kernel: KernelParams  # jitter is the value that factorized
    chol: np.ndarray
    alpha: np.ndarray
    y_mean: float
    y_scale: float

    @property
    def prior_sigma(self) -> float:
        return self.y_scale * math.sqrt(self.kernel.signal_variance)

    def posterior(self, x):
        """Vectorized posterior; ``x`` has shape ``(m, d)``. Returns ``(mu, sigma)`` arrays."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if not np.all(np.isfinite(x)):
            raise NonFiniteInput("posterior queried at a non-finite point")
        ks = matern25(cdist(x, self.inputs), self.kernel)
        mu = ks @ self.alpha
        v = solve_triangular(self.chol, ks.T, lower=True, check_finite=False)
        var = np.maximum(self.kernel.signal_variance - np.sum(v * v, axis=0), 0.0)
        return self.y_mean + self.y_scale * mu, self.y_scale * np.sqrt(var)


def _factorize(gram: np.ndarray):
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        return None
    piv = np.diag(chol)
    if (piv.max() / piv.min()) ** 2 > MAX_CONDITION:
        return None
    return chol


def fit_gp(history: Sequence, params: KernelParams | None = None) -> GpModel:
    """Fit the GP to ``history``, a sequence of ``(point, value)`` pairs.

    The jitter is multiplied by 10 until the Gram matrix factorizes, giving up
    past ``MAX_JITTER``.
    """
    params = params or KernelParams()
    if len(history) == 0:
        raise ValueError("history must hold at least one observation")
    inputs = np.atleast_2d(np.array([np.atleast_1d(np.asarray(p, dtype=float)) for p, _ in history]))
    values = np.array([float(v) for _, v in history])
    if not (np.all(np.isfinite(values)) and np.all(np.isfinite(inputs))):
        raise NonFiniteInput("history contains non-finite entries")

    y_mean = float(values.mean())
    y_scale = float(values.std())
    if not y_scale > 0:
        y_scale = 1.0
    targets = (values - y_mean) / y_scale

    gram = matern25(cdist(inputs, inputs), params)
    gram = np.atleast_2d(gram)
    jitter = params.jitter
    while True:
        chol = _factorize(gram + jitter * np.eye(len(gram)))
        if chol is not None:
            break
        jitter *= 10.0
        if jitter > MAX_JITTER * (1 + 1e-9):
            raise IllConditionedKernel(
                f"Gram matrix of {len(gram)} points not factorizable with jitter up to {MAX_JITTER}"
            )
    alpha = solve_triangular(chol.T, solve_triangular(chol, targets, lower=True), lower=False)
    return GpModel(
        inputs=inputs,
        targets=targets,
        kernel=replace(params, jitter=jitter),
        chol=chol,
        alpha=alpha,
        y_mean=y_mean,
        y_scale=y_scale,
    )


def posterior_at(model: GpModel, x) -> tuple[float, float]:
    """Posterior mean and standard deviation at a single point, in objective units."""
    mu, sigma = model.posterior(np.atleast_1d(np.asarray(x, dtype=float))[None, :])
    return float(mu[0]), float(sigma[0])
