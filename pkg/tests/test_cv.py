import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hteffects.errors import ContractError, FoldError
from hteffects.learners import (
    FITTERS,
    assign_folds,
    auc,
    cross_validate,
    default_grid,
    make_plan,
    r2_score,
)
from hteffects.synthetic import DgpSpec, generate


def pairwise_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for p, q in itertools.product(pos, neg):
        total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def test_auc_worked_example():
    assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75


def test_auc_extremes():
    assert auc([1, 2, 3, 4], [0, 0, 1, 1]) == 1.0
    assert auc([4, 3, 2, 1], [0, 0, 1, 1]) == 0.0
    with pytest.raises(ContractError):
        auc([1, 2], [1, 1])


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 1)), min_size=2, max_size=30))
def test_auc_matches_pair_count(pairs):
    scores = [float(s) for s, _ in pairs]
    labels = [l for _, l in pairs]
    if len(set(labels)) < 2:
        return
    assert abs(auc(scores, labels) - pairwise_auc(scores, labels)) < 1e-12


@given(st.integers(20, 200), st.integers(2, 6), st.integers(0, 1000))
def test_folds_partition_rows(n, k, seed):
    folds = assign_folds(n, k, np.random.default_rng(seed))
    assert folds.shape == (n,)
    assert set(folds) == set(range(k))
    assert np.bincount(folds).max() - np.bincount(folds).min() <= 1


@given(st.integers(0, 1000))
def test_grouped_folds_keep_copies_together(seed):
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, 60, 60)
    folds = assign_folds(60, 5, np.random.default_rng(seed + 1), groups=rows)
    for r in np.unique(rows):
        assert np.unique(folds[rows == r]).size == 1


def test_stratified_folds_hold_both_classes():
    y = np.r_[np.zeros(40), np.ones(10)]
    folds = assign_folds(50, 5, np.random.default_rng(0), stratify=y)
    for f in range(5):
        assert set(y[folds == f]) == {0.0, 1.0}


def test_single_setting_grid():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 2))
    y = x[:, 0]
    plan = make_plan(50, 5, [{"lam": 0.3}], "neg_mse", rng)
    assert cross_validate(FITTERS["ridge"], plan, x, y).best == {"lam": 0.3}


def test_ridge_prefers_no_penalty_on_clean_linear_data():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(100, 3))
    y = x @ np.array([1.0, -2.0, 0.5]) + 0.01 * rng.normal(size=100)
    plan = make_plan(100, 5, [{"lam": 1e6}, {"lam": 0.0}], "neg_mse", rng)
    assert cross_validate(FITTERS["ridge"], plan, x, y).best == {"lam": 0.0}


def test_ties_go_to_simpler_setting():
    class Const:
        def predict(self, x):
            return np.zeros(len(x))

    def fit(x, y, **setting):
        return Const()

    grid = [{"lam": 0.1}, {"lam": 1.0}, {"n_trees": 300, "max_depth": 3},
            {"n_trees": 100, "max_depth": 2}]
    plan = make_plan(30, 3, grid[:2], "neg_mse", np.random.default_rng(0))
    res = cross_validate(fit, plan, np.zeros((30, 1)), np.arange(30.0))
    assert res.best == {"lam": 1.0}
    plan = make_plan(30, 3, grid[2:], "neg_mse", np.random.default_rng(0))
    assert cross_validate(fit, plan, np.zeros((30, 1)), np.arange(30.0)).best["n_trees"] == 100


def test_classifier_fold_missing_class():
    y = np.r_[np.zeros(18), np.ones(2)]
    folds = np.r_[np.zeros(10, int), np.ones(10, int)]
    folds[-2:] = 1
    from hteffects.learners import CvPlan
    plan = CvPlan(2, folds, ({"lam": 1.0},), "neg_log_loss")
    with pytest.raises(FoldError) as info:
        cross_validate(FITTERS["logistic"], plan, np.zeros((20, 1)), y)
    assert info.value.tag == "FOLD_CLASS"


def test_row_permutation_invariance():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(80, 3))
    y = x[:, 0] - x[:, 2] + rng.normal(size=80)
    grid = default_grid("lasso", x, y, size=8)
    plan = make_plan(80, 4, grid, "neg_mse", rng)
    perm = rng.permutation(80)
    from hteffects.learners import CvPlan
    permuted = CvPlan(4, plan.folds[perm], plan.grid, "neg_mse")
    a = cross_validate(FITTERS["lasso"], plan, x, y)
    b = cross_validate(FITTERS["lasso"], permuted, x[perm], y[perm])
    assert a.best == b.best


def test_gbr_beats_lasso_on_nonlinear_surface():
    ds, _ = generate(DgpSpec("DGP-NL", n=600, seed=3))
    rng = np.random.default_rng(0)
    folds = assign_folds(ds.n, 5, rng)
    from hteffects.learners import CvPlan
    gbr = cross_validate(FITTERS["gbr"], CvPlan(5, folds, ({"n_trees": 100, "max_depth": 3},)),
                         ds.x, ds.y)
    lasso = cross_validate(FITTERS["lasso"], CvPlan(5, folds, tuple(default_grid("lasso", ds.x, ds.y))),
                           ds.x, ds.y)
    assert gbr.mean_scores.max() > lasso.mean_scores.max()


def test_r2_of_perfect_fit():
    y = np.arange(5.0)
    assert r2_score(y, y) == 1.0
    assert r2_score(y, np.full(5, y.mean())) == 0.0
