"""L2-penalized logistic regression fitted by damped Newton iterations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from ..errors import ContractError, ConvergenceError

_EPS = np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class LogisticModel:
    intercept: float
    weights: np.ndarray
    lam: float
    n_iter: int = 0

    def decision_function(self, x):
        return np.asarray(x, dtype=float) @ self.weights + self.intercept

    def predict(self, x):
        """Probability of the positive class, kept strictly inside (0, 1)."""
        return np.clip(expit(self.decision_function(x)), _EPS, 1.0 - _EPS)


def objective(b, w, x, y, lam):
    """Mean negative log-likelihood plus ``lam/2 * ||w||^2`` (intercept free)."""
    z = x @ w + b
    nll = -np.mean(y * log_expit(z) + (1 - y) * log_expit(-z))
    return nll + 0.5 * lam * float(w @ w)


def _separates(z, y):
    # gradient can vanish numerically while the weights run off to infinity
    return z[y == 1].min() > z[y == 0].max()


def fit_logistic(x, y, lam, tol=1e-6, max_iter=100):
    """Minimize :func:`objective` until the gradient norm drops below ``tol``.

    Separable data with ``lam == 0`` has no finite optimum; the weights
    diverge and a :class:`ConvergenceError` is raised.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if lam < 0:
        raise ContractError("lam must be non-negative")
    if not np.all((y == 0) | (y == 1)):
        raise ContractError("logistic target must be binary")
    if y.min() == y.max():
        raise ContractError("logistic target has a single class", tag="SINGLE_CLASS")
    n, d = x.shape
    a = np.column_stack([np.ones(n), x])
    penalty = np.full(d + 1, lam)
    penalty[0] = 0.0
    beta = np.zeros(d + 1)
    p0 = y.mean()
    beta[0] = np.log(p0 / (1 - p0))

    def loss(beta):
        return objective(beta[0], beta[1:], x, y, lam)

    current = loss(beta)
    for it in range(1, max_iter + 1):
        p = expit(a @ beta)
        grad = a.T @ (p - y) / n + penalty * beta
        if np.linalg.norm(grad) < tol:
            if lam == 0 and _separates(a @ beta, y):
                break
            return LogisticModel(float(beta[0]), beta[1:].copy(), float(lam), it - 1)
        hess = (a * (p * (1 - p))[:, None]).T @ a / n + np.diag(penalty)
        hess[np.diag_indices_from(hess)] += 1e-12
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = grad
        t = 1.0
        while t > 1e-10:
            trial = beta - t * step
            value = loss(trial)
            if value <= current + 1e-4 * t * float(grad @ -step) or value < current:
                break
            t *= 0.5
        beta, current = trial, value
        if np.abs(beta).max() > 1e6:
            break
    raise ConvergenceError(
        "logistic regression did not converge (separable classes?); use lam > 0",
        tag="LOGISTIC_NONCONVERGENCE",
    )
