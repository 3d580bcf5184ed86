"""Gaussian-process causal regression with a composite treatment kernel.

The covariance between units ``i`` and ``j`` is::

    amp_mu * matern(|z_i - z_j| / l_mu) + t_i t_j (amp_tau * matern(|x_i - x_j| / l_tau) + tau0)

with ``z = (x, rho(x))``, the Matern-3/2 correlation
``matern(r) = (1 + sqrt(3) r) exp(-sqrt(3) r)`` and noise variance added on the
diagonal of the training covariance. The first term is the prognostic
surface; the second switches on only between treated units and is the
treatment effect surface, so ``f(x, 1) - f(x, 0)`` has prior covariance
``amp_tau * matern + tau0``.

Kernel parameters are fitted by maximizing the log marginal likelihood over
their logarithms with L-BFGS-B, restarting from a few initial points.
Outcomes are standardized inside the fit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numba import njit
from scipy.linalg import LinAlgError, cho_solve, cholesky, lapack, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import pdist, squareform

from ..errors import ContractError, NumericalError
from .posterior import PosteriorEffect

SQRT3 = np.sqrt(3.0)
MAX_N = 10_000
_PARAMS = ("length_mu", "amp_mu", "length_tau", "amp_tau", "tau0", "noise")


@dataclass(frozen=True)
class CompositeKernel:
    length_mu: float = 10.0
    amp_mu: float = 1.0
    length_tau: float = 50.0
    amp_tau: float = 0.1
    tau0: float = 0.001
    noise: float = 1.0

    def __post_init__(self):
        for name in ("length_mu", "amp_mu", "length_tau", "amp_tau", "noise"):
            if not getattr(self, name) > 0:
                raise ContractError(f"kernel parameter {name} must be positive")
        if not self.tau0 >= 0:
            raise ContractError("tau0 must be non-negative")

    def to_log(self):
        return np.log([getattr(self, p) for p in _PARAMS])

    @classmethod
    def from_log(cls, theta):
        return cls(*np.exp(theta))

    def as_dict(self):
        return {p: float(getattr(self, p)) for p in _PARAMS}


def matern32(r, length):
    """Matern-3/2 correlation at distance ``r`` for length-scale ``length``."""
    a = SQRT3 * np.asarray(r, dtype=float) / length
    return (1.0 + a) * np.exp(-a)


def _distances(a):
    a = np.asarray(a, dtype=float)
    d = squareform(pdist(a)) if a.shape[0] > 1 else np.zeros((1, 1))
    if not np.all(np.isfinite(d)):
        raise ContractError("non-finite distance between kernel inputs")
    return d


def _inputs(x, rho):
    x = np.asarray(x, dtype=float)
    z = x if rho is None else np.column_stack([x, rho])
    return z, x


def assemble_gp_covariance(x, t, kernel, rho=None, noise=True):
    """Composite covariance over ``(x, t)`` pairs.

    ``rho`` (propensities) is appended to ``x`` for the prognostic kernel
    when given. ``noise=True`` adds the noise variance on the diagonal.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if x.shape[0] == 0:
        raise ContractError("no kernel inputs")
    z, xt = _inputs(x, rho)
    k = kernel.amp_mu * matern32(_distances(z), kernel.length_mu)
    k += np.outer(t, t) * (kernel.amp_tau * matern32(_distances(xt), kernel.length_tau) + kernel.tau0)
    if noise:
        k[np.diag_indices_from(k)] += kernel.noise
    return k


def jittered_cholesky(k, start=1e-8, stop=1e-2):
    """Lower Cholesky factor, adding ``jitter * mean(diag)`` on failure.

    Jitter starts at ``start`` and grows tenfold up to ``stop``.
    """
    try:
        return cholesky(k, lower=True), 0.0
    except LinAlgError:
        pass
    scale = float(np.mean(np.diag(k)))
    jitter = start
    while jitter <= stop * (1 + 1e-9):
        try:
            return cholesky(k + jitter * scale * np.eye(k.shape[0]), lower=True), jitter
        except LinAlgError:
            jitter *= 10
    raise NumericalError("covariance is not positive definite even with jitter", tag="GP_CHOLESKY")


@njit(cache=True)
def _assemble_lower(dist_mu, dist_tau, n1, l_mu, a_mu, l_tau, a_tau, tau0, diag_add):
    """Lower triangle of the training covariance, treated units first."""
    n = dist_mu.shape[0]
    k = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            r = SQRT3 * dist_mu[i, j] / l_mu
            v = a_mu * (1.0 + r) * np.exp(-r)
            if i < n1:
                r = SQRT3 * dist_tau[i, j] / l_tau
                v += a_tau * (1.0 + r) * np.exp(-r) + tau0
            k[i, j] = v
        k[i, i] += diag_add
    return k


@njit(cache=True)
def _gradient_sums(dist_mu, dist_tau, n1, l_mu, l_tau, alpha, kinv):
    """Sums of ``W * dK/dtheta`` with ``W = alpha alpha' - K^-1`` (lower triangle of ``kinv``)."""
    n = dist_mu.shape[0]
    g = np.zeros(6)
    for i in range(n):
        for j in range(i + 1):
            w = alpha[i] * alpha[j] - kinv[i, j]
            if i != j:
                w *= 2.0
            else:
                g[5] += w
            r = SQRT3 * dist_mu[i, j] / l_mu
            e = np.exp(-r)
            g[0] += w * r * r * e
            g[1] += w * (1.0 + r) * e
            if i < n1:
                r = SQRT3 * dist_tau[i, j] / l_tau
                e = np.exp(-r)
                g[2] += w * r * r * e
                g[3] += w * (1.0 + r) * e
                g[4] += w
    return g


class _Objective:
    """Negative log marginal likelihood and its gradient in log-parameters.

    Units are reordered treated-first (the likelihood is permutation
    invariant) so the treatment kernel occupies the leading ``n1 x n1`` block.
    """

    def __init__(self, z, x, t, y):
        order = np.argsort(-t, kind="stable")
        self.n1 = int(t.sum())
        self.dist_mu = _distances(z[order])
        self.dist_tau = _distances(x[order])
        self.y = y[order]

    def _factor(self, kern):
        args = (self.dist_mu, self.dist_tau, self.n1, kern.length_mu, kern.amp_mu,
                kern.length_tau, kern.amp_tau, kern.tau0)
        k = _assemble_lower(*args, kern.noise)
        scale = float(np.mean(np.diag(k)))
        jitter = 0.0
        while True:
            chol, info = lapack.dpotrf(k, lower=1, clean=1, overwrite_a=1)
            if info == 0:
                return chol
            jitter = 1e-8 if jitter == 0 else jitter * 10
            if jitter > 1e-2 * (1 + 1e-9):
                return None
            k = _assemble_lower(*args, kern.noise + jitter * scale)

    def __call__(self, theta):
        kern = CompositeKernel.from_log(theta)
        chol = self._factor(kern)
        if chol is None:
            return 1e25, np.zeros_like(theta)
        n = self.y.shape[0]
        alpha, _ = lapack.dpotrs(chol, self.y, lower=1)
        nll = 0.5 * self.y @ alpha + np.log(np.diag(chol)).sum() + 0.5 * n * np.log(2 * np.pi)
        kinv, info = lapack.dpotri(chol, lower=1, overwrite_c=1)
        if info != 0:
            return 1e25, np.zeros_like(theta)
        g = _gradient_sums(self.dist_mu, self.dist_tau, self.n1, kern.length_mu,
                           kern.length_tau, alpha, kinv)
        grad = g * np.array([kern.amp_mu, kern.amp_mu, kern.amp_tau, kern.amp_tau,
                             kern.tau0, kern.noise])
        return float(nll), -0.5 * grad


@dataclass(frozen=True, eq=False)
class GpFit:
    kernel: CompositeKernel
    log_ml: float
    initial_log_ml: float
    y_mean: float
    y_sd: float
    starts: tuple


def _standardized(ds):
    y_mean, y_sd = float(ds.y.mean()), float(ds.y.std())
    if not y_sd > 0:
        raise ContractError("outcome has zero variance")
    return (ds.y - y_mean) / y_sd, y_mean, y_sd


def optimize_kernel(ds, rho_x, init=None, n_starts=3, noise_floor=1e-6, max_iter=100):
    """Type-II maximum likelihood for the composite kernel.

    Starts from ``init`` and, for ``n_starts > 1``, from copies with both
    length-scales scaled by 0.1 and by 10. The noise variance is bounded
    below by ``noise_floor`` (in standardized outcome units). The returned
    kernel never has lower marginal likelihood than ``init``.
    """
    if ds.n > MAX_N:
        raise ContractError(f"dense GP limited to n <= {MAX_N}")
    init = init or CompositeKernel()
    if init.tau0 == 0:
        init = replace(init, tau0=1e-12)
    ys, y_mean, y_sd = _standardized(ds)
    z, x = _inputs(ds.x, rho_x)
    objective = _Objective(z, x, ds.t, ys)
    bounds = [(np.log(1e-3), np.log(1e5)), (np.log(1e-8), np.log(1e3)),
              (np.log(1e-3), np.log(1e5)), (np.log(1e-12), np.log(1e3)),
              (np.log(1e-14), np.log(1e3)), (np.log(noise_floor), np.log(1e3))]
    factors = (1.0, 0.1, 10.0)[:max(1, n_starts)]
    theta0 = np.clip(init.to_log(), [b[0] for b in bounds], [b[1] for b in bounds])
    init_nll, _ = objective(theta0)
    best_theta, best_nll = theta0, init_nll
    for f in factors:
        start = theta0.copy()
        start[[0, 2]] += np.log(f)
        start = np.clip(start, [b[0] for b in bounds], [b[1] for b in bounds])
        res = minimize(objective, start, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": max_iter})
        if np.isfinite(res.fun) and res.fun < best_nll:
            best_theta, best_nll = res.x, float(res.fun)
    return GpFit(CompositeKernel.from_log(best_theta), -best_nll, -init_nll, y_mean, y_sd,
                 tuple(factors))


def gp_posterior_effect(ds, rho_x, kernel, n_draws=100, seed=0):
    """Draws of ``f(x_i, 1) - f(x_i, 0)`` at the training units.

    ``kernel`` is in standardized outcome units; draws are returned in the
    original units.
    """
    ys, y_mean, y_sd = _standardized(ds)
    k = assemble_gp_covariance(ds.x, ds.t, kernel, rho=rho_x)
    chol, _ = jittered_cholesky(k)
    alpha = cho_solve((chol, True), ys)
    k_tau = kernel.amp_tau * matern32(_distances(ds.x), kernel.length_tau) + kernel.tau0
    cross = k_tau * ds.t[None, :]
    mean = cross @ alpha
    v = solve_triangular(chol, cross.T, lower=True)
    cov = k_tau - v.T @ v
    cov = 0.5 * (cov + cov.T)
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((n_draws, ds.n))
    if np.abs(cov).max() == 0:
        draws = np.broadcast_to(mean, (n_draws, ds.n)).copy()
    else:
        try:
            lc, _ = jittered_cholesky(cov, start=1e-10, stop=1e-4)
            draws = mean + eps @ lc.T
        except NumericalError:
            vals, vecs = np.linalg.eigh(cov)
            draws = mean + (eps * np.sqrt(np.clip(vals, 0, None))) @ vecs.T
    return y_sd * draws


def gp_posterior_mean(ds, rho_x, kernel):
    """Posterior mean of ``f(x_i, t_i)`` at the training inputs, original units."""
    ys, y_mean, y_sd = _standardized(ds)
    k = assemble_gp_covariance(ds.x, ds.t, kernel, rho=rho_x)
    chol, _ = jittered_cholesky(k)
    alpha = cho_solve((chol, True), ys)
    f = (k - kernel.noise * np.eye(ds.n)) @ alpha
    return y_mean + y_sd * f


def fit_gp(ds, rho, init=None, n_starts=3, n_draws=100, seed=0, noise_floor=1e-6):
    """Fit the kernel by ML-II and sample the treatment-effect posterior.

    Returns ``(kernel, effect)``; the kernel is in standardized outcome units.
    """
    rho_x = rho.predict(ds.x)
    fit = optimize_kernel(ds, rho_x, init, n_starts, noise_floor)
    tau = gp_posterior_effect(ds, rho_x, fit.kernel, n_draws, seed)
    diagnostics = {"log_ml": fit.log_ml, "initial_log_ml": fit.initial_log_ml,
                   "kernel": fit.kernel.as_dict()}
    return fit.kernel, PosteriorEffect(tau, "Bayes-GP", True, diagnostics)
