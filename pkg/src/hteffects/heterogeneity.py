"""Effect-modifier discovery: permutation importance on a CATE surrogate and
median-split subgroup contrasts."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import BINARY, CONTINUOUS, MISSING_INDICATOR
from .errors import ContractError
from .inference import _replicate, percentile_interval
from .learners import FITTERS, cross_validate, default_grid, make_plan
from .rng import derive_rng, derive_seed

MIN_GROUP = 30


@dataclass(frozen=True, eq=False)
class SurrogateFit:
    model: object
    setting: dict
    constant: bool

    def predict(self, x):
        return self.model.predict(x)


def fit_cate_surrogate(x, cate, k=5, grid=None, seed=0):
    """Boosted-tree regression of per-unit CATEs on the features, tuned by CV.

    A constant CATE vector is flagged: the surrogate is then a constant and
    every permutation importance will be zero.
    """
    x = np.asarray(x, dtype=float)
    cate = np.asarray(cate, dtype=float)
    if cate.shape != (x.shape[0],):
        raise ContractError("need one CATE per row of x")
    if not np.all(np.isfinite(cate)):
        raise ContractError("CATE vector has non-finite entries")
    constant = bool(np.ptp(cate) <= 1e-12 * (1 + np.abs(cate).max()))
    if constant:
        warnings.warn("CATE is constant; importances will be zero", RuntimeWarning, stacklevel=2)
    grid = list(grid) if grid is not None else default_grid("gbr")
    if len(grid) > 1 and not constant:
        plan = make_plan(x.shape[0], k, grid, "neg_mse", derive_rng(seed, "surrogate"))
        best = cross_validate(FITTERS["gbr"], plan, x, cate).best
    else:
        best = dict(grid[0])
    return SurrogateFit(FITTERS["gbr"](x, cate, **best), best, constant)


def _importance_with_perms(model, x, cate, perms):
    """Mean increase in MSE against ``cate`` when column ``j`` is reordered by ``perms[r][j]``."""
    baseline = np.mean((model.predict(x) - cate) ** 2)
    d = x.shape[1]
    out = np.zeros(d)
    for rep in perms:
        for j in range(d):
            xp = x.copy()
            xp[:, j] = x[rep[j], j]
            out[j] += np.mean((model.predict(xp) - cate) ** 2) - baseline
    return out / len(perms)


def permutation_importance(surrogate, x, cate, n_repeats=1, seed=0):
    """Per-feature MSE increase after shuffling that feature's column.

    The reference is the original CATE vector and the surrogate's own
    unpermuted MSE is subtracted, so a feature the surrogate never splits on
    scores exactly zero. Small negative values can occur by chance.
    """
    x = np.asarray(x, dtype=float)
    cate = np.asarray(cate, dtype=float)
    rng = derive_rng(seed, "permutation")
    perms = [[rng.permutation(x.shape[0]) for _ in range(x.shape[1])] for _ in range(n_repeats)]
    return _importance_with_perms(surrogate, x, cate, perms)


@dataclass(frozen=True, eq=False)
class ImportanceReport:
    features: list
    per_replicate: np.ndarray

    @property
    def n_replicates(self):
        return self.per_replicate.shape[0]

    @property
    def mean(self):
        return self.per_replicate.mean(axis=0)

    @property
    def std(self):
        return self.per_replicate.std(axis=0)

    @property
    def rank(self):
        """1 for the largest mean importance; ties keep column order."""
        order = np.argsort(-self.mean, kind="stable")
        rank = np.empty(order.size, dtype=int)
        rank[order] = np.arange(1, order.size + 1)
        return rank

    def rows(self):
        return [
            {"feature": f, "mean": float(m), "std": float(s), "rank": int(r)}
            for f, m, s, r in zip(self.features, self.mean, self.std, self.rank)
        ]

    def top_with_residual(self, top=10):
        """Shares of total importance for the ``top`` features plus a residual bucket.

        Negative means are treated as zero when forming shares.
        """
        mean = np.clip(self.mean, 0, None)
        total = mean.sum()
        order = np.argsort(-self.mean, kind="stable")
        shares = mean / total if total > 0 else np.zeros_like(mean)
        head = [{"feature": self.features[j], "importance": float(self.mean[j]),
                 "share": float(shares[j])} for j in order[:top]]
        rest = order[top:]
        return {
            "top": head,
            "residual": {"features": len(rest), "importance": float(mean[rest].sum()),
                         "share": float(shares[rest].sum())},
        }


def importance_over_bootstrap(ds, estimator, n_boot=100, seed=0, bootstrap=None,
                              surrogate_grid=None, k=5, n_repeats=1):
    """Average permutation importances over bootstrap replicates.

    Each replicate's estimator is refitted on the resample and its CATEs on
    the original rows feed a freshly tuned surrogate. Passing a
    :class:`BootstrapResult` from :func:`bootstrap_effect` with the same
    estimator and seed reuses its CATE draws instead of refitting.
    """
    if bootstrap is None:
        min_arm = getattr(estimator, "min_arm", 1)
        draws = np.vstack([_replicate(ds, estimator, seed, s, min_arm)[0] for s in range(n_boot)])
    else:
        draws = bootstrap.cate_draws[:n_boot]
    per_rep = np.empty((draws.shape[0], ds.d))
    for s, cate in enumerate(draws):
        surrogate = fit_cate_surrogate(ds.x, cate, k, surrogate_grid, derive_seed(seed, "surrogate", s))
        per_rep[s] = permutation_importance(surrogate, ds.x, cate, n_repeats,
                                            derive_seed(seed, "importance", s))
    return ImportanceReport(ds.feature_names, per_rep)


@dataclass(frozen=True, eq=False)
class SubgroupContrast:
    feature: str
    rule: str
    split_value: float
    sizes: tuple
    group_draws: np.ndarray
    ci_level: float
    notes: tuple = ()

    @property
    def group_ate(self):
        return self.group_draws.mean(axis=0)

    @property
    def group_ci(self):
        lo, hi = percentile_interval(self.group_draws, self.ci_level)
        return [(float(lo[g]), float(hi[g])) for g in range(2)]

    @property
    def difference_draws(self):
        return self.group_draws[:, 1] - self.group_draws[:, 0]

    @property
    def difference(self):
        return float(self.difference_draws.mean())

    @property
    def difference_ci(self):
        lo, hi = percentile_interval(self.difference_draws, self.ci_level)
        return float(lo), float(hi)

    def as_dict(self):
        return {
            "feature": self.feature,
            "rule": self.rule,
            "split_value": self.split_value,
            "groups": [
                {"group": name, "size": int(size), "ate": float(ate), "ci": list(ci)}
                for name, size, ate, ci in zip(("lower", "upper"), self.sizes, self.group_ate,
                                               self.group_ci)
            ],
            "difference": self.difference,
            "difference_ci": list(self.difference_ci),
            "ci_level": self.ci_level,
            "notes": list(self.notes),
        }


def subgroup_contrast(ds, bootstrap, feature, rule="median", ci_level=None):
    """Split the original sample on one feature and contrast group ATEs.

    ``median``: lower group is ``x <= median`` (ties go to the lower group).
    ``binary``: lower group is the smaller of the two levels. Group ATEs per
    replicate are means of that replicate's CATEs within the group; the
    difference is upper minus lower.
    """
    j = ds.column_index(feature)
    col = ds.x[:, j]
    kind = ds.schema[j].kind
    if rule == "median":
        if kind != CONTINUOUS:
            raise ContractError(f"median split needs a continuous feature, {ds.schema[j].name!r} is {kind}")
        split = float(np.median(col))
        upper = col > split
    elif rule == "binary":
        levels = np.unique(col)
        if levels.size != 2 and kind not in (BINARY, MISSING_INDICATOR):
            raise ContractError(f"binary split needs a two-level feature, {ds.schema[j].name!r} has {levels.size}")
        split = float(levels.min())
        upper = col > split
    else:
        raise ContractError(f"unknown split rule {rule!r}")
    sizes = (int((~upper).sum()), int(upper.sum()))
    if min(sizes) < 2:
        raise ContractError(f"split on {ds.schema[j].name!r} leaves a group with {min(sizes)} units")
    notes = []
    if min(sizes) < MIN_GROUP:
        notes.append(f"smallest group has {min(sizes)} units (< {MIN_GROUP})")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
    draws = bootstrap.cate_draws
    group_draws = np.column_stack([draws[:, ~upper].mean(axis=1), draws[:, upper].mean(axis=1)])
    return SubgroupContrast(ds.schema[j].name, rule, split, sizes, group_draws,
                            ci_level or bootstrap.ci_level, tuple(notes))
