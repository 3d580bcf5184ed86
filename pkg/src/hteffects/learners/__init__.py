"""Supervised learners and the hyperparameter grids used to tune them."""

from itertools import product

import numpy as np

from .boosting import BoostedTreeModel, GbrConfig, RegressionTree, fit_gbr
from .cv import CvPlan, CvResult, assign_folds, auc, cross_validate, make_plan, r2_score, score
from .linear import LinearModel, fit_lasso, fit_ridge, lambda_max, lasso_path, log_grid
from .logistic import LogisticModel, fit_logistic

GBR_GRID = {
    "n_trees": (100, 300),
    "max_depth": (2, 3, 4),
    "learning_rate": (0.05, 0.1),
    "min_leaf": (5, 20),
}
LOGISTIC_LAMS = tuple(np.geomspace(10.0, 1e-4, 10))


def expand_grid(axes):
    keys = list(axes)
    return [dict(zip(keys, values)) for values in product(*(axes[k] for k in keys))]


def _lasso(x, y, lam):
    return fit_lasso(x, y, lam, tol=1e-7)


def _gbr(x, y, **setting):
    return fit_gbr(x, y, GbrConfig(**setting))


FITTERS = {
    "lasso": _lasso,
    "ridge": fit_ridge,
    "gbr": _gbr,
    "logistic": fit_logistic,
}


def default_grid(learner, x=None, y=None, size=20):
    """Default search grid; the penalty grids scale with the data's ``lambda_max``."""
    if learner in ("lasso", "ridge"):
        return [{"lam": lam} for lam in log_grid(lambda_max(x, y), size)]
    if learner == "gbr":
        return expand_grid(GBR_GRID)
    if learner == "logistic":
        return [{"lam": lam} for lam in LOGISTIC_LAMS]
    raise KeyError(f"unknown learner {learner!r}")


__all__ = [
    "BoostedTreeModel", "CvPlan", "CvResult", "FITTERS", "GBR_GRID", "GbrConfig",
    "LinearModel", "LogisticModel", "RegressionTree", "assign_folds", "auc",
    "cross_validate", "default_grid", "expand_grid", "fit_gbr", "fit_lasso",
    "fit_logistic", "fit_ridge", "lambda_max", "lasso_path", "log_grid",
    "make_plan", "r2_score", "score",
]
