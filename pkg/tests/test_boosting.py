import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hteffects.errors import ContractError
from hteffects.learners import GbrConfig, fit_gbr


@pytest.fixture(scope="module")
def wavy():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(500, 4))
    y = np.sin(2 * x[:, 0]) + x[:, 1] ** 2 + 0.3 * rng.normal(size=500)
    return x, y


def test_training_loss_non_increasing(wavy):
    x, y = wavy
    model = fit_gbr(x, y, n_trees=150, max_depth=3, learning_rate=0.1)
    assert np.all(np.diff(model.train_loss) <= 1e-12)
    np.testing.assert_allclose(model.train_loss[-1], np.mean((y - model.predict(x)) ** 2), rtol=1e-10)


def test_prediction_is_initial_plus_scaled_tree_sum(wavy):
    x, y = wavy
    model = fit_gbr(x, y, n_trees=40, max_depth=2)
    direct = model.initial + model.learning_rate * sum(t.predict(x) for t in model.trees)
    np.testing.assert_array_equal(model.predict(x), model.initial + model.learning_rate * model.tree_sum(x))
    np.testing.assert_allclose(model.predict(x), direct, atol=1e-12)
    assert model.initial == y.mean()


def test_thresholds_inside_training_range(wavy):
    x, y = wavy
    model = fit_gbr(x, y, n_trees=30, max_depth=4)
    split = model.feature >= 0
    feats = model.feature[split]
    thr = model.threshold[split]
    assert np.all(thr >= x.min(axis=0)[feats]) and np.all(thr <= x.max(axis=0)[feats])


def test_constant_target():
    x = np.random.default_rng(1).normal(size=(50, 2))
    model = fit_gbr(x, np.full(50, 3.25), n_trees=5)
    np.testing.assert_array_equal(model.predict(x), 3.25)
    assert model.used_features() == set()


def test_step_function():
    x = np.linspace(-1, 1, 200)[:, None]
    y = (x[:, 0] > 0).astype(float)
    model = fit_gbr(x, y, n_trees=50, max_depth=1, learning_rate=0.5, min_leaf=1)
    assert np.all(np.diff(model.train_loss) <= 0)
    assert model.train_loss[-1] < 1e-3


def test_irrelevant_constant_feature_never_used(wavy):
    x, y = wavy
    x = np.column_stack([x, np.zeros(len(y))])
    model = fit_gbr(x, y, n_trees=20)
    assert 4 not in model.used_features()


@given(st.integers(0, 100))
def test_deterministic_and_subsample_seeded(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(60, 2))
    y = x[:, 0] + rng.normal(size=60)
    a = fit_gbr(x, y, n_trees=10, subsample=0.5, seed=seed)
    b = fit_gbr(x, y, n_trees=10, subsample=0.5, seed=seed)
    np.testing.assert_array_equal(a.predict(x), b.predict(x))


def test_invalid_configs():
    x = np.zeros((10, 1))
    y = np.zeros(10)
    for bad in (dict(max_depth=0), dict(n_trees=0), dict(learning_rate=0), dict(min_leaf=0),
                dict(subsample=1.5)):
        with pytest.raises(ContractError):
            fit_gbr(x, y, **bad)
    with pytest.raises(ContractError):
        fit_gbr(x[:3], y[:3], GbrConfig(min_leaf=5))
