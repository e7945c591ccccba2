import math

import numpy as np
import pytest

from oracles import gp_dense_posterior, matern_bessel, matern_bessel_elementary
from raar import surrogate
from raar.errors import IllConditionedKernel, InvalidDistance, NonFiniteInput
from raar.surrogate import (
    LENGTH_SCALE_FLOOR,
    KernelParams,
    fit_gp,
    matern25,
    median_length_scale,
    posterior_at,
)

UNIT = KernelParams(length_scale=1.0, signal_variance=1.0, jitter=1e-6)


def test_kernel_at_zero_is_signal_variance():
    assert matern25(0.0, UNIT) == 1.0
    assert matern25(0.0, KernelParams(signal_variance=2.5)) == 2.5


def test_kernel_at_unit_distance():
    expected = matern_bessel_elementary(1.0, 1.0)
    assert expected == pytest.approx(0.52400, abs=1e-5)
    assert matern25(1.0, UNIT) == pytest.approx(expected, abs=1e-9)


def test_kernel_decays():
    assert matern25(50.0, UNIT) < 1e-12
    assert matern25(50 * 0.3, KernelParams(length_scale=0.3)) < 1e-12


def test_negative_distance_rejected():
    with pytest.raises(InvalidDistance):
        matern25(-0.1, UNIT)


def test_elementary_oracle_agrees_with_scipy_bessel():
    for r in (0.01, 0.5, 1.0, 3.0, 9.0):
        assert matern_bessel_elementary(r, 1.3) == pytest.approx(matern_bessel(r, 1.3), rel=1e-10)


@pytest.mark.parametrize("kw", [{"length_scale": 0}, {"signal_variance": -1}, {"jitter": 1e-13}, {"nu": 1.5}])
def test_kernel_params_validated(kw):
    with pytest.raises(ValueError):
        KernelParams(**kw)


def test_single_observation_factor():
    m = fit_gp([((0.3,), 1.0)], UNIT)
    assert m.chol.shape == (1, 1)
    assert m.chol[0, 0] == pytest.approx(math.sqrt(1 + 1e-6), abs=1e-15)


def test_duplicate_points_need_escalation():
    hist = [((0.5,), 0.0), ((0.5,), 1.0)]
    try:
        m = fit_gp(hist, KernelParams(jitter=1e-12))
    except IllConditionedKernel:
        return
    assert m.kernel.jitter > 1e-12


def test_escalation_gives_up(monkeypatch):
    # Rank-one Gram from repeated inputs; a strict condition cap makes every jitter fail.
    monkeypatch.setattr(surrogate, "MAX_CONDITION", 10.0)
    hist = [((0.5,), float(i % 2)) for i in range(100)]
    with pytest.raises(IllConditionedKernel):
        fit_gp(hist, KernelParams(jitter=1e-12, length_scale=1.0))
    monkeypatch.undo()
    m = fit_gp(hist, KernelParams(jitter=1e-12, length_scale=1.0))
    assert 1e-12 < m.kernel.jitter <= 1e-4


def test_non_finite_history_rejected():
    with pytest.raises(NonFiniteInput):
        fit_gp([((0.1,), float("nan"))])


def test_posterior_matches_dense_solve():
    X = np.array([[0.05], [0.2], [0.45], [0.7], [0.95]])
    y = np.array([1.0, -2.0, 0.5, 3.0, 0.0])
    m = fit_gp(list(zip(X, y)), KernelParams(length_scale=0.3, jitter=1e-8))
    Xq = np.linspace(0, 1, 11)[:, None]
    mu, _ = m.posterior(Xq)
    assert np.allclose(mu, gp_dense_posterior(X, y, Xq, 0.3, 1e-8), atol=1e-9)
    mu_train, _ = m.posterior(X)
    assert np.max(np.abs((mu_train - y) / y.std())) <= 1e-5


def test_one_point_posterior():
    m = fit_gp([((0.0,), 1.0)], UNIT)
    mu, sigma = posterior_at(m, (0.0,))
    assert mu == pytest.approx(1.0, abs=1e-5) and sigma == pytest.approx(0.0, abs=1.1e-3)
    mu, sigma = posterior_at(m, (50.0,))
    assert mu == pytest.approx(1.0) and sigma == pytest.approx(m.prior_sigma)
    # Standardized single target is 0, so the one-point posterior k(1)/(k(0)+jitter) * 0 de-standardizes to 1.
    mu, sigma = posterior_at(m, (1.0,))
    assert mu == pytest.approx(1.0 + 0.52400 / (1 + 1e-6) * 0.0)
    k1 = matern_bessel_elementary(1.0, 1.0)
    assert sigma == pytest.approx(math.sqrt(1 - k1 * k1 / (1 + 1e-6)), rel=1e-9)


def test_two_point_posterior_between():
    m = fit_gp([((0.0,), 0.0), ((1.0,), 2.0)], UNIT)
    mu, _ = posterior_at(m, (0.5,))
    assert mu == pytest.approx(1.0, abs=1e-9)  # symmetry


def test_gram_symmetric_and_psd():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 21))
        X = rng.random((n, int(rng.integers(1, 4))))
        m = fit_gp(list(zip(X, rng.normal(size=n))), KernelParams(length_scale=median_length_scale(X), jitter=1e-6))
        assert m.kernel.jitter == 1e-6
        gram = m.chol @ m.chol.T
        assert np.allclose(gram, gram.T)


def test_sigma_nonnegative_everywhere():
    rng = np.random.default_rng(1)
    X = rng.random((8, 2))
    m = fit_gp(list(zip(X, rng.normal(size=8))), KernelParams(length_scale=0.4))
    _, s = m.posterior(rng.random((500, 2)) * 3 - 1)
    assert np.all(s >= 0)


def test_median_length_scale():
    assert median_length_scale(np.array([[0.0], [0.3], [1.0]])) == pytest.approx(0.7)
    assert median_length_scale(np.array([[0.0], [0.0]])) == 1.0
    assert median_length_scale(np.array([[0.2]])) == 1.0
    assert median_length_scale(np.array([[0.0], [1e-5], [2e-5]])) == LENGTH_SCALE_FLOOR
