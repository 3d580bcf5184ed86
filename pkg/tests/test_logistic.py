import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import expit

from hteffects.errors import ContractError, ConvergenceError
from hteffects.learners import auc, fit_logistic
from hteffects.learners.logistic import objective


def grid_search(x, y, lam, center=(0.0, 0.0), half=4.0, steps=401, rounds=4):
    """Dense penalized-likelihood search over (b, w), shrinking the window each round."""
    b0, w0 = center
    for _ in range(rounds):
        bs = np.linspace(b0 - half, b0 + half, steps)
        ws = np.linspace(w0 - half, w0 + half, steps)
        bb, ww = np.meshgrid(bs, ws, indexing="ij")
        z = bb[..., None] + ww[..., None] * x[None, None, :]
        nll = -np.mean(y * np.log(expit(z)) + (1 - y) * np.log(expit(-z)), axis=-1)
        val = nll + 0.5 * lam * ww**2
        i, j = np.unravel_index(np.argmin(val), val.shape)
        b0, w0 = bs[i], ws[j]
        half = half * 4 / (steps - 1)
    return b0, w0


def test_four_point_problem_matches_grid_search():
    x = np.array([-1.0, 0.5, 1.0, 2.0])
    y = np.array([0.0, 1.0, 0.0, 1.0])
    lam = 0.2
    model = fit_logistic(x[:, None], y, lam)
    b, w = grid_search(x, y, lam)
    assert abs(model.weights[0] - w) < 1e-3
    assert abs(model.intercept - b) < 1e-3


@given(st.integers(0, 300), st.floats(1e-3, 1.0))
def test_gradient_vanishes_at_optimum(seed, lam):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(60, 3))
    y = (rng.random(60) < expit(x[:, 0])).astype(float)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    m = fit_logistic(x, y, lam)
    p = expit(x @ m.weights + m.intercept)
    grad = np.r_[np.mean(p - y), x.T @ (p - y) / 60 + lam * m.weights]
    assert np.linalg.norm(grad) < 1e-6
    out = m.predict(x * 1e6)
    assert np.all((out > 0) & (out < 1))


def test_objective_is_minimized():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(40, 2))
    y = (rng.random(40) < 0.5).astype(float)
    m = fit_logistic(x, y, 0.1)
    best = objective(m.intercept, m.weights, x, y, 0.1)
    for _ in range(20):
        db, dw = rng.normal(scale=0.05), rng.normal(scale=0.05, size=2)
        assert objective(m.intercept + db, m.weights + dw, x, y, 0.1) >= best


def test_no_signal_gives_half():
    x = np.array([[1.0], [1.0], [-1.0], [-1.0]])
    y = np.array([1.0, 0.0, 1.0, 0.0])
    m = fit_logistic(x, y, 0.5)
    assert abs(m.weights[0]) < 1e-8
    np.testing.assert_allclose(m.predict(x), 0.5, atol=1e-8)


def test_separable_with_penalty_ranks_perfectly():
    x = np.linspace(-2, 2, 20)[:, None]
    y = (x[:, 0] > 0).astype(float)
    m = fit_logistic(x, y, 0.1)
    assert auc(m.predict(x), y) == 1.0


def test_separable_without_penalty_fails():
    x = np.linspace(-2, 2, 20)[:, None]
    y = (x[:, 0] > 0).astype(float)
    with pytest.raises(ConvergenceError) as info:
        fit_logistic(x, y, 0.0)
    assert info.value.tag == "LOGISTIC_NONCONVERGENCE"
    assert info.value.exit_code == 3


def test_single_class_rejected():
    with pytest.raises(ContractError) as info:
        fit_logistic(np.ones((4, 1)), np.ones(4), 0.1)
    assert info.value.tag == "SINGLE_CLASS"
