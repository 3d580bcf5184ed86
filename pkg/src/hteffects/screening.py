"""Top-K feature screening along a LASSO regularization path."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .learners import lambda_max, lasso_path


@dataclass(frozen=True, eq=False)
class ScreeningResult:
    """Selected columns ranked by descending absolute coefficient."""

    indices: np.ndarray
    coefficients: np.ndarray
    lam: float
    target_k: int
    names: list | None = None

    @property
    def achieved_k(self):
        return int(self.indices.size)

    def rows(self):
        def name(j):
            return self.names[j] if self.names is not None else f"x{j + 1}"

        return [
            {"rank": r + 1, "column": name(j), "coefficient": float(c)}
            for r, (j, c) in enumerate(zip(self.indices, self.coefficients))
        ]


def pick_path_point(active_sizes, target_k):
    """Index of the path point to keep.

    Chooses the largest active set that does not exceed ``target_k``; among
    equal sizes the earliest (largest-penalty) point wins. A path whose sizes
    jump 88 -> 91 -> 104 with ``target_k = 100`` keeps the 91-feature point.
    """
    sizes = np.asarray(active_sizes)
    ok = np.flatnonzero(sizes <= target_k)
    if ok.size == 0:
        return 0
    best = sizes[ok].max()
    return int(ok[sizes[ok] == best][0])


def screen_top_k(x, target, target_k, n_lambdas=100, ratio=1e-4, names=None, tol=1e-7):
    """Select about ``target_k`` predictors of an auxiliary target.

    Walks ``n_lambdas`` log-spaced penalties from ``lambda_max`` down to
    ``ratio * lambda_max`` with warm starts. Path active sets are not tunable
    to an exact size, so the achieved count may fall short of ``target_k``.
    The auxiliary target should be a different measurement from the outcome
    used later for effect estimation.
    """
    x = np.asarray(x, dtype=float)
    target = np.asarray(target, dtype=float)
    d = x.shape[1]
    if target_k < 1:
        raise ContractError("target_k must be at least 1")
    if target_k > d:
        raise ContractError(f"target_k={target_k} exceeds the {d} available features")
    if not np.ptp(target) > 0:
        raise ContractError("auxiliary target has zero variance")
    lam0 = lambda_max(x, target)
    lams = np.geomspace(lam0, lam0 * ratio, n_lambdas)
    models = lasso_path(x, target, lams, tol=tol)
    sizes = [int(np.count_nonzero(m.weights)) for m in models]
    chosen = models[pick_path_point(sizes, target_k)]
    active = np.flatnonzero(chosen.weights)
    order = active[np.argsort(-np.abs(chosen.weights[active]), kind="stable")]
    return ScreeningResult(order, chosen.weights[order], chosen.lam, int(target_k),
                           list(names) if names is not None else None)
