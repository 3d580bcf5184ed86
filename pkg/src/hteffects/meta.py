"""T-learner and doubly-robust learner.

The T-learner fits one outcome regression per arm and differences them. The
DR learner adds a propensity model and augments each surface with its
inverse-propensity-weighted residual::

    phi_i = [t_i (y_i - mu1_i) / rho_i + mu1_i]
          - [(1 - t_i) (y_i - mu0_i) / (1 - rho_i) + mu0_i]

whose mean is the DR estimate of the ATE.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .learners import FITTERS, auc, cross_validate, default_grid, make_plan
from .rng import derive_rng

MIN_ARM = 20
LEARNERS = ("lasso", "ridge", "gbr")


@dataclass(frozen=True, eq=False)
class CateVector:
    values: np.ndarray
    tag: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ContractError("CATE vector has non-finite entries")

    @property
    def ate(self):
        return float(np.mean(self.values))

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class OutcomeSurfacePair:
    mu0: object
    mu1: object
    learner: str
    params0: dict
    params1: dict
    n_features: int

    def _check(self, x):
        if x.shape[1] != self.n_features:
            raise ContractError(
                f"surfaces were fitted on {self.n_features} features, got {x.shape[1]}",
                tag="SCHEMA_MISMATCH",
            )

    def predict0(self, x):
        x = np.asarray(x, dtype=float)
        self._check(x)
        return self.mu0.predict(x)

    def predict1(self, x):
        x = np.asarray(x, dtype=float)
        self._check(x)
        return self.mu1.predict(x)


def _fit_arm(x, y, learner, k, grid, rng, groups):
    grid = grid if grid is not None else default_grid(learner, x, y)
    fit = FITTERS[learner]
    if len(grid) == 1:
        best = dict(grid[0])
    else:
        plan = make_plan(y.shape[0], k, grid, "neg_mse", rng, groups=groups)
        best = cross_validate(fit, plan, x, y).best
    return fit(x, y, **best), best


def fit_t_learner(ds, learner="gbr", k=5, grid=None, seed=0, groups=None, min_arm=MIN_ARM):
    """Fit one surface per arm, tuning hyperparameters by k-fold CV within the arm.

    ``groups`` (same length as ``ds``) keeps rows with the same group id in
    the same fold; bootstrap replicates pass the original row ids here.
    """
    if learner not in LEARNERS:
        raise ContractError(f"unknown learner {learner!r}; choose from {LEARNERS}")
    ds.require_both_arms(max(min_arm, k))
    models, params = [], []
    for arm in (0, 1):
        rows = ds.t == arm
        g = None if groups is None else np.asarray(groups)[rows]
        model, best = _fit_arm(ds.x[rows], ds.y[rows], learner, k, grid,
                               derive_rng(seed, f"t_learner/arm{arm}"), g)
        models.append(model)
        params.append(best)
    return OutcomeSurfacePair(models[0], models[1], learner, params[0], params[1], ds.d)


def cate_t_learner(pair, x):
    """Per-unit ``mu1(x) - mu0(x)``; accepts a Dataset or a feature matrix."""
    x = getattr(x, "x", x)
    return CateVector(pair.predict1(x) - pair.predict0(x), "T-learner")


@dataclass(frozen=True, eq=False)
class PropensityModel:
    """A logistic classifier whose output is clipped to ``[eps, 1 - eps]``."""

    model: object
    epsilon: float = 0.01
    n_features: int | None = None
    holdout_auc: float | None = None
    lam: float | None = None

    def __post_init__(self):
        if not 0 < self.epsilon < 0.5:
            raise ContractError("propensity clip epsilon must lie in (0, 0.5)")

    def check_schema(self, ds):
        d = getattr(ds, "d", None)
        if d is None:
            d = np.asarray(ds).shape[1]
        if self.n_features is not None and d != self.n_features:
            raise ContractError(
                f"propensity model expects {self.n_features} features, got {d}",
                tag="SCHEMA_MISMATCH",
            )

    def predict_raw(self, x):
        x = np.asarray(x, dtype=float)
        self.check_schema(x)
        return self.model.predict(x)

    def predict(self, x):
        return np.clip(self.predict_raw(x), self.epsilon, 1.0 - self.epsilon)


def fit_propensity(ds, lam_grid=None, k=5, epsilon=0.01, seed=0, groups=None):
    """Regularized logistic propensity model, penalty chosen by CV log-loss.

    ``holdout_auc`` is the AUC of out-of-fold predictions at the chosen
    penalty.
    """
    ds.require_both_arms(k)
    grid = [{"lam": lam} for lam in lam_grid] if lam_grid is not None else default_grid("logistic")
    fit = FITTERS["logistic"]
    plan = make_plan(ds.n, k, grid, "neg_log_loss", derive_rng(seed, "propensity"),
                     groups=groups, stratify=ds.t)
    best = cross_validate(fit, plan, ds.x, ds.t).best
    oof = np.empty(ds.n)
    for f in range(plan.k):
        valid = plan.folds == f
        oof[valid] = fit(ds.x[~valid], ds.t[~valid], **best).predict(ds.x[valid])
    model = fit(ds.x, ds.t, **best)
    return PropensityModel(model, epsilon, ds.d, auc(oof, ds.t), best["lam"])


def dr_terms(y, t, mu1, mu0, rho):
    """Per-unit DR pseudo-outcomes from arrays."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0) or np.any(rho >= 1):
        raise ContractError("propensities must lie strictly inside (0, 1)", tag="PROPENSITY_RANGE")
    treated = t * (y - mu1) / rho + mu1
    control = (1 - t) * (y - mu0) / (1 - rho) + mu0
    return treated - control


def ate_doubly_robust(ds, pair, rho):
    """Return ``(ate, phi)`` where ``phi`` holds the per-unit DR terms."""
    phi = dr_terms(ds.y, ds.t, pair.predict1(ds.x), pair.predict0(ds.x), rho.predict(ds.x))
    return float(np.mean(phi)), phi


def cate_doubly_robust(ds, pair, rho):
    _, phi = ate_doubly_robust(ds, pair, rho)
    return CateVector(phi, "DR")
