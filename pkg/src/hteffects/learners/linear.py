"""Penalized least squares: LASSO by coordinate descent, Ridge by SVD.

Both minimize over an unpenalized intercept ``b`` and weights ``w``::

    lasso:  (1/2n) ||y - Xw - b||^2 + lam * ||w||_1
    ridge:  (1/2n) ||y - Xw - b||^2 + (lam/2) * ||w||^2

The ridge scaling makes its normal equations ``(Xc'Xc + n lam I) w = Xc'yc``
with ``Xc``, ``yc`` the column-centered data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..errors import ContractError, NumericalError


@dataclass(frozen=True, eq=False)
class LinearModel:
    intercept: float
    weights: np.ndarray
    penalty: str
    lam: float
    converged: bool = True
    n_iter: int = 0

    def predict(self, x):
        return np.asarray(x, dtype=float) @ self.weights + self.intercept


def _check_xy(x, y):
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ContractError("expected x of shape (n, d) and y of shape (n,)")
    if not np.all(np.isfinite(y)):
        raise ContractError("target contains NaN or infinite values")
    if not np.all(np.isfinite(x)):
        raise ContractError("features contain NaN or infinite values")
    return x, y


@njit(cache=True)
def _col_dot(xc, j, v):
    s = 0.0
    for i in range(xc.shape[0]):
        s += xc[i, j] * v[i]
    return s


@njit(cache=True)
def _lambda_max(xc, yc):
    n, d = xc.shape
    best = 0.0
    for j in range(d):
        g = abs(_col_dot(xc, j, yc)) / n
        if g > best:
            best = g
    return best


@njit(cache=True)
def _lasso_cd(xc, yc, lam, w, tol, max_iter):
    n, d = xc.shape
    sq = np.empty(d)
    for j in range(d):
        sq[j] = _col_dot(xc, j, xc[:, j]) / n
    r = yc.copy()
    for j in range(d):
        if w[j] != 0.0:
            for i in range(n):
                r[i] -= xc[i, j] * w[j]
    for it in range(max_iter):
        delta = 0.0
        for j in range(d):
            if sq[j] == 0.0:
                continue
            wj = w[j]
            rho = _col_dot(xc, j, r) / n + sq[j] * wj
            if rho > lam:
                new = (rho - lam) / sq[j]
            elif rho < -lam:
                new = (rho + lam) / sq[j]
            else:
                new = 0.0
            if new != wj:
                diff = new - wj
                for i in range(n):
                    r[i] -= xc[i, j] * diff
                w[j] = new
                if abs(diff) > delta:
                    delta = abs(diff)
        if delta < tol:
            return w, it + 1, True
    return w, max_iter, False


def _center(x, y):
    xm = x.mean(axis=0)
    ym = y.mean()
    return np.ascontiguousarray(x - xm), y - ym, xm, ym


def lambda_max(x, y):
    """Smallest L1 penalty at which every LASSO weight is zero."""
    x, y = _check_xy(x, y)
    xc, yc, _, _ = _center(x, y)
    return float(_lambda_max(xc, yc))


def fit_lasso(x, y, lam, tol=1e-9, max_iter=100_000, warm_start=None):
    """LASSO by cyclic coordinate descent.

    Converges when the largest coordinate update of a full sweep is below
    ``tol``. Hitting ``max_iter`` returns the current iterate with
    ``converged=False``; the caller decides what to do with it.
    """
    x, y = _check_xy(x, y)
    if lam < 0:
        raise ContractError("lam must be non-negative")
    if tol <= 0:
        raise ContractError("tol must be positive")
    xc, yc, xm, ym = _center(x, y)
    w = np.zeros(x.shape[1]) if warm_start is None else np.array(warm_start, dtype=float)
    w, n_iter, converged = _lasso_cd(xc, yc, float(lam), w, float(tol), int(max_iter))
    return LinearModel(float(ym - xm @ w), w, "l1", float(lam), bool(converged), int(n_iter))


def lasso_path(x, y, lams, tol=1e-9, max_iter=100_000):
    """Warm-started LASSO fits along ``lams`` (in the given order)."""
    x, y = _check_xy(x, y)
    xc, yc, xm, ym = _center(x, y)
    w = np.zeros(x.shape[1])
    models = []
    for lam in lams:
        w, n_iter, converged = _lasso_cd(xc, yc, float(lam), w.copy(), float(tol), int(max_iter))
        models.append(LinearModel(float(ym - xm @ w), w.copy(), "l1", float(lam), bool(converged), int(n_iter)))
    return models


def fit_ridge(x, y, lam):
    """Ridge regression solved through the SVD of the centered design."""
    x, y = _check_xy(x, y)
    if lam < 0:
        raise ContractError("lam must be non-negative")
    n = x.shape[0]
    xc, yc, xm, ym = _center(x, y)
    u, s, vt = np.linalg.svd(xc, full_matrices=False)
    if lam == 0:
        tiny = s.max(initial=0.0) * max(xc.shape) * np.finfo(float).eps
        if x.shape[1] > n or s.size == 0 or s.min() <= tiny:
            raise NumericalError(
                "normal equations are singular at lam=0; use lam > 0", tag="RIDGE_SINGULAR"
            )
        shrink = 1.0 / s
    else:
        shrink = s / (s**2 + n * lam)
    w = vt.T @ (shrink * (u.T @ yc))
    return LinearModel(float(ym - xm @ w), w, "l2", float(lam))


def log_grid(lam_max, size=20, ratio=1e-4):
    """``size`` log-spaced penalties from ``lam_max`` down to ``ratio * lam_max``."""
    if not lam_max > 0:
        lam_max = 1.0
    return list(np.geomspace(lam_max, lam_max * ratio, size))
