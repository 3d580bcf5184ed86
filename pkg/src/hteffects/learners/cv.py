"""Fold plans, scoring and grid-search cross-validation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from ..errors import ContractError, FoldError

SCORINGS = ("neg_mse", "r2", "neg_log_loss", "auc")
_CLASSIFIER_SCORINGS = ("neg_log_loss", "auc")


def auc(scores, labels):
    """Area under the ROC curve as the Mann-Whitney statistic.

    Equals P(score of a random positive > score of a random negative)
    plus half the probability of a tie.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = labels == 1
    n1 = int(pos.sum())
    n0 = labels.size - n1
    if n1 == 0 or n0 == 0:
        raise ContractError("AUC needs both classes present", tag="SINGLE_CLASS")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def r2_score(y, pred):
    y = np.asarray(y, dtype=float)
    sst = np.sum((y - y.mean()) ** 2)
    sse = np.sum((y - pred) ** 2)
    if sst == 0:
        return 1.0 if sse == 0 else -np.inf
    return float(1.0 - sse / sst)


def score(kind, y, pred):
    if kind == "neg_mse":
        return -float(np.mean((np.asarray(y) - pred) ** 2))
    if kind == "r2":
        return r2_score(y, pred)
    if kind == "neg_log_loss":
        p = np.clip(pred, 1e-15, 1 - 1e-15)
        return float(np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))
    if kind == "auc":
        return auc(pred, y)
    raise ContractError(f"unknown scoring {kind!r}")


@dataclass(frozen=True, eq=False)
class CvPlan:
    k: int
    folds: np.ndarray
    grid: tuple
    scoring: str = "neg_mse"

    def __post_init__(self):
        folds = np.asarray(self.folds)
        if self.k < 2:
            raise ContractError("cross-validation needs k >= 2")
        if not self.grid:
            raise ContractError("hyperparameter grid is empty")
        if self.scoring not in SCORINGS:
            raise ContractError(f"unknown scoring {self.scoring!r}")
        if folds.min(initial=0) < 0 or folds.max(initial=0) >= self.k:
            raise ContractError("fold labels must lie in 0..k-1")
        if np.unique(folds).size != self.k:
            raise FoldError("every fold must be non-empty")
        object.__setattr__(self, "grid", tuple(dict(g) for g in self.grid))


def assign_folds(n, k, rng, groups=None, stratify=None):
    """Random fold labels for ``n`` rows.

    With ``groups``, folds are dealt to the distinct group ids and every row
    inherits the fold of its group; rows sharing a group (duplicated bootstrap
    draws of one original unit) therefore never straddle train and
    validation. With ``stratify``, each class is dealt round-robin separately.
    """
    if groups is not None:
        groups = np.asarray(groups)
        uniq, inverse = np.unique(groups, return_inverse=True)
        if uniq.size < k:
            raise FoldError(f"{uniq.size} distinct units cannot fill {k} folds")
        strat = None
        if stratify is not None:
            strat = np.zeros(uniq.size, dtype=np.asarray(stratify).dtype)
            strat[inverse] = stratify
        unit_folds = assign_folds(uniq.size, k, rng, stratify=strat)
        return unit_folds[inverse]
    if n < k:
        raise FoldError(f"{n} rows cannot fill {k} folds")
    folds = np.empty(n, dtype=np.int64)
    if stratify is None:
        perm = rng.permutation(n)
        folds[perm] = np.arange(n) % k
        return folds
    stratify = np.asarray(stratify)
    offset = 0
    for cls in np.unique(stratify):
        idx = np.flatnonzero(stratify == cls)
        perm = rng.permutation(idx)
        folds[perm] = (np.arange(idx.size) + offset) % k
        offset += idx.size
    if np.unique(folds).size != k:
        raise FoldError("stratified assignment left a fold empty")
    return folds


def make_plan(n, k, grid, scoring, rng, groups=None, stratify=None):
    return CvPlan(k, assign_folds(n, k, rng, groups=groups, stratify=stratify), tuple(grid), scoring)


def complexity(setting):
    """Ordering key: smaller means simpler (stronger penalty, fewer/shallower trees)."""
    return (
        -float(setting.get("lam", 0.0)),
        int(setting.get("n_trees", 0)),
        int(setting.get("max_depth", 0)),
        -int(setting.get("min_leaf", 0)),
        float(setting.get("learning_rate", 0.0)),
    )


@dataclass(frozen=True, eq=False)
class CvResult:
    best: dict
    best_index: int
    mean_scores: np.ndarray
    std_scores: np.ndarray
    grid: tuple


def cross_validate(fit, plan, x, y):
    """Grid search by k-fold cross-validation.

    ``fit(x, y, **setting)`` must return a model with ``predict``. The
    setting with the highest mean held-out score wins; exact ties go to the
    simpler setting (see :func:`complexity`) and then to grid order.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    folds = np.asarray(plan.folds)
    if folds.shape[0] != y.shape[0]:
        raise ContractError("fold plan does not match the number of rows")
    classify = plan.scoring in _CLASSIFIER_SCORINGS
    splits = []
    for f in range(plan.k):
        valid = folds == f
        if classify and (np.unique(y[valid]).size < 2 or np.unique(y[~valid]).size < 2):
            raise FoldError(f"fold {f} is missing a class", tag="FOLD_CLASS")
        splits.append((~valid, valid))
    scores = np.empty((len(plan.grid), plan.k))
    for g, setting in enumerate(plan.grid):
        for f, (train, valid) in enumerate(splits):
            model = fit(x[train], y[train], **setting)
            scores[g, f] = score(plan.scoring, y[valid], model.predict(x[valid]))
    mean = scores.mean(axis=1)
    std = scores.std(axis=1)
    top = np.flatnonzero(mean == mean.max())
    best = min(top, key=lambda g: (complexity(plan.grid[g]), g))
    return CvResult(dict(plan.grid[best]), int(best), mean, std, plan.grid)
