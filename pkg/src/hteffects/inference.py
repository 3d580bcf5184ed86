"""Model-class evaluation by nested CV and effect uncertainty by bootstrap."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .errors import ContractError, NumericalError
from .learners import r2_score
from .meta import (
    LEARNERS,
    MIN_ARM,
    _fit_arm,
    cate_doubly_robust,
    cate_t_learner,
    fit_propensity,
    fit_t_learner,
)
from .rng import derive_rng, derive_seed

MAX_REDRAWS = 10


@dataclass(frozen=True, eq=False)
class TLearnerEstimator:
    """Bootstrap-ready T-learner: ``est(train, evaluate, seed, groups) -> CATE``."""

    learner: str = "gbr"
    k: int = 5
    grid: tuple | None = None

    @property
    def tag(self):
        return f"t-{self.learner}"

    @property
    def min_arm(self):
        return max(MIN_ARM, self.k)

    def __call__(self, train, evaluate, seed, groups=None):
        pair = fit_t_learner(train, self.learner, self.k, self.grid, seed, groups)
        return cate_t_learner(pair, evaluate).values


@dataclass(frozen=True, eq=False)
class DrEstimator:
    """Bootstrap-ready DR learner.

    The propensity model is refitted on each training sample unless a fitted
    ``propensity`` is supplied, in which case it is held fixed.
    """

    learner: str = "gbr"
    k: int = 5
    grid: tuple | None = None
    epsilon: float = 0.01
    lam_grid: tuple | None = None
    propensity: object = None

    @property
    def tag(self):
        return f"dr-{self.learner}"

    @property
    def min_arm(self):
        return max(MIN_ARM, self.k)

    def __call__(self, train, evaluate, seed, groups=None):
        pair = fit_t_learner(train, self.learner, self.k, self.grid, seed, groups)
        rho = self.propensity
        if rho is None:
            rho = fit_propensity(train, self.lam_grid, self.k, self.epsilon,
                                 derive_seed(seed, "propensity"), groups)
        return cate_doubly_robust(evaluate, pair, rho).values


def percentile_interval(draws, level=0.95):
    """Percentile interval from order statistics.

    With ``S`` sorted draws and ``alpha = 1 - level`` the bounds are the draws
    at 1-based ranks ``ceil(S * alpha / 2)`` and ``ceil(S * (1 - alpha / 2))``,
    clamped to ``[1, S]``. For S=100 at 95% these are ranks 3 and 98.
    """
    if not 0 < level < 1:
        raise ContractError("interval level must lie in (0, 1)")
    draws = np.sort(np.asarray(draws, dtype=float), axis=0)
    s = draws.shape[0]
    alpha = 1.0 - level
    lo = min(max(math.ceil(s * alpha / 2 - 1e-9), 1), s)
    hi = min(max(math.ceil(s * (1 - alpha / 2) - 1e-9), 1), s)
    return draws[lo - 1], draws[hi - 1]


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    estimator: str
    ate_draws: np.ndarray
    cate_draws: np.ndarray
    ci_level: float
    seed: int
    redraws: int = 0
    grand_mean: float = field(init=False)
    ci_low: float = field(init=False)
    ci_high: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "grand_mean", float(np.mean(self.ate_draws)))
        lo, hi = percentile_interval(self.ate_draws, self.ci_level)
        object.__setattr__(self, "ci_low", float(lo))
        object.__setattr__(self, "ci_high", float(hi))

    @property
    def n(self):
        return self.cate_draws.shape[1]

    @property
    def n_boot(self):
        return self.ate_draws.shape[0]

    @property
    def ate(self):
        return self.grand_mean

    def cate_mean(self):
        return self.cate_draws.mean(axis=0)

    def cate_interval(self, level=None):
        return percentile_interval(self.cate_draws, level or self.ci_level)


def _resample(ds, seed, s, min_arm):
    for attempt in range(MAX_REDRAWS + 1):
        rows = derive_rng(seed, f"bootstrap/rows/{attempt}", s).integers(0, ds.n, ds.n)
        n1 = int(ds.t[rows].sum())
        if min(n1, ds.n - n1) >= min_arm:
            return rows, attempt
    raise NumericalError(
        f"bootstrap replicate {s} drew a starved arm {MAX_REDRAWS + 1} times in a row",
        tag="BOOTSTRAP_ARM",
    )


def _replicate(ds, estimator, seed, s, min_arm):
    rows, redraws = _resample(ds, seed, s, min_arm)
    cate = np.asarray(estimator(ds.take(rows), ds, derive_seed(seed, "bootstrap/fit", s), groups=rows),
                      dtype=float)
    if cate.shape != (ds.n,):
        raise ContractError("estimator must return one CATE per original unit")
    return cate, redraws


def bootstrap_effect(ds, estimator, n_boot=100, ci_level=0.95, seed=0, n_jobs=1):
    """Bootstrap the ATE and per-unit CATEs.

    Each replicate resamples ``n`` rows with replacement, refits the
    estimator on the replicate (its internal CV keeps copies of one original
    row in one fold) and evaluates CATEs on the original rows. Replicate ATEs
    are means of those CATEs; the point estimate is their grand mean.

    ``estimator(train, evaluate, seed, groups=...)`` may be any callable
    returning a length-``n`` vector for ``evaluate``; an optional ``min_arm``
    attribute sets the smallest acceptable arm size in a replicate.
    """
    if n_boot < 2:
        raise ContractError("bootstrap needs at least two replicates")
    ds.require_both_arms()
    min_arm = getattr(estimator, "min_arm", 1)
    if n_jobs == 1:
        results = [_replicate(ds, estimator, seed, s, min_arm) for s in range(n_boot)]
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(_replicate)(ds, estimator, seed, s, min_arm) for s in range(n_boot)
        )
    cate = np.vstack([c for c, _ in results])
    tag = getattr(estimator, "tag", getattr(estimator, "__name__", "custom"))
    return BootstrapResult(tag, cate.mean(axis=1), cate, ci_level, seed,
                           sum(r for _, r in results))


@dataclass(frozen=True, eq=False)
class NestedCvReport:
    """Outer-holdout scores keyed by ``(learner, arm)`` with arm 0 = control."""

    scores: dict
    selected: dict
    outer_repeats: int
    inner_k: int
    split: float

    def summary(self):
        out = {}
        for (learner, arm), s in self.scores.items():
            out[(learner, arm)] = {
                metric: (float(np.mean(v)), float(np.std(v))) for metric, v in s.items()
            }
        return out

    def mean_r2(self, learner, arm):
        return float(np.mean(self.scores[(learner, arm)]["r2"]))

    def rows(self):
        """Flat table rows: learner, arm, metric, mean, std."""
        return [
            {"learner": learner, "arm": "treated" if arm else "control", "metric": metric,
             "mean": mean, "std": std}
            for (learner, arm), metrics in self.summary().items()
            for metric, (mean, std) in metrics.items()
        ]


def nested_cv_evaluate(ds, learners=LEARNERS, outer_repeats=10, split=0.8, inner_k=5,
                       seed=0, grids=None):
    """Score model classes on random train/holdout splits.

    Every outer repeat draws one split (shared by all learners). Within the
    training part, hyperparameters are chosen per arm by ``inner_k``-fold CV
    and the winner is refitted on the whole training arm, then scored on
    that arm's holdout rows. A split that leaves an arm too small is redrawn.
    """
    if outer_repeats < 2:
        raise ContractError("nested CV needs at least two outer repeats")
    if not 0 < split < 1:
        raise ContractError("split must lie in (0, 1)")
    grids = grids or {}
    n_train = int(round(split * ds.n))
    scores = {(lrn, arm): {"neg_mse": [], "r2": []} for lrn in learners for arm in (0, 1)}
    selected = {(lrn, arm): [] for lrn in learners for arm in (0, 1)}
    for r in range(outer_repeats):
        for attempt in range(MAX_REDRAWS + 1):
            perm = derive_rng(seed, f"nested_cv/split/{attempt}", r).permutation(ds.n)
            train, test = perm[:n_train], perm[n_train:]
            tr_t, te_t = ds.t[train], ds.t[test]
            if (min(tr_t.sum(), (1 - tr_t).sum()) >= inner_k
                    and min(te_t.sum(), (1 - te_t).sum()) >= 2):
                break
        else:
            raise NumericalError("could not draw an outer split with both arms populated",
                                 tag="NESTED_CV_ARM")
        for learner in learners:
            for arm in (0, 1):
                tr = train[ds.t[train] == arm]
                te = test[ds.t[test] == arm]
                model, best = _fit_arm(ds.x[tr], ds.y[tr], learner, inner_k, grids.get(learner),
                                       derive_rng(seed, f"nested_cv/{learner}/arm{arm}", r), None)
                pred = model.predict(ds.x[te])
                scores[(learner, arm)]["neg_mse"].append(-float(np.mean((ds.y[te] - pred) ** 2)))
                scores[(learner, arm)]["r2"].append(r2_score(ds.y[te], pred))
                selected[(learner, arm)].append(best)
    scores = {key: {m: np.array(v) for m, v in s.items()} for key, s in scores.items()}
    return NestedCvReport(scores, selected, outer_repeats, inner_k, split)


def reference_estimators(ds):
    """Difference in arm means and the OLS coefficient on ``t`` given ``(1, t, x)``."""
    ds.require_both_arms()
    dim = float(ds.y[ds.treated].mean() - ds.y[ds.control].mean())
    design = np.column_stack([np.ones(ds.n), ds.t, ds.x])
    coef, _, rank, _ = np.linalg.lstsq(design, ds.y, rcond=None)
    if rank < design.shape[1]:
        raise NumericalError(
            "OLS design (1, t, x) is rank deficient; prune collinear or constant features",
            tag="OLS_SINGULAR",
        )
    return dim, float(coef[1])
