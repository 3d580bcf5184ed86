"""Bayesian causal forest: two BART ensembles fitted by Bayesian backfitting.

::

    y_i ~ N(mu(x_i, rho(x_i)) + tau(x_i) t_i, sigma^2)

``mu`` is a prognostic forest that also sees the propensity score and
``tau`` is a treatment forest whose contribution is multiplied by ``t``.
Each tree has the branching prior ``P(node at depth q splits) =
alpha (1 + q)^-beta`` and is updated by grow/prune Metropolis-Hastings moves
followed by a conjugate draw of its leaf values. Split values come from a
fixed grid of quantile cutpoints per feature. ``sigma^2`` has the usual
inverse-gamma prior, calibrated so a linear fit's residual variance sits at
its ``q``-quantile.

Trees are stored heap-ordered (children of ``k`` at ``2k+1`` and ``2k+2``)
with a hard depth cap, which keeps every array fixed-size inside numba.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.stats import chi2

from ..errors import ContractError, NumericalError
from .posterior import PosteriorEffect

MAX_DEPTH = 8
N_CUTS = 30
MIN_ARM = 20

_UNUSED, _LEAF, _SPLIT = 0, 1, 2


@dataclass(frozen=True)
class BcfConfig:
    trees_prognostic: int = 200
    alpha_prognostic: float = 0.95
    beta_prognostic: float = 2.0
    trees_treatment: int = 50
    alpha_treatment: float = 0.25
    beta_treatment: float = 3.0
    burn_in: int = 500
    kept: int = 2000
    min_leaf: int = 5
    sigma_df: float = 3.0
    sigma_quantile: float = 0.9

    def validate(self):
        for a in (self.alpha_prognostic, self.alpha_treatment):
            if not 0 < a < 1:
                raise ContractError("branching prior alpha must lie in (0, 1)")
        for b in (self.beta_prognostic, self.beta_treatment):
            if not b > 0:
                raise ContractError("depth penalty beta must be positive")
        if self.trees_prognostic < 1 or self.trees_treatment < 1:
            raise ContractError("each forest needs at least one tree")
        if self.burn_in < 1 or self.kept < 1:
            raise ContractError("burn-in and kept sweeps must be at least 1")
        if self.min_leaf < 1:
            raise ContractError("min_leaf must be at least 1")
        return self


def split_probability(alpha, beta, depth):
    """Prior probability that a node at ``depth`` is nonterminal."""
    return alpha * (1.0 + depth) ** (-beta)


@njit(cache=True)
def _split_prob(alpha, beta, depth, max_depth):
    if depth >= max_depth:
        return 0.0
    return alpha * (1.0 + depth) ** (-beta)


@njit(cache=True)
def _sample_prior_depths(alpha, beta, n_draws, max_depth, seed):
    np.random.seed(seed)
    splits = np.zeros(max_depth + 1)
    visits = np.zeros(max_depth + 1)
    size = 2 ** (max_depth + 1) - 1
    stack = np.empty(size, dtype=np.int64)
    for _ in range(n_draws):
        top = 0
        stack[top] = 0
        top += 1
        while top > 0:
            top -= 1
            depth = stack[top]
            visits[depth] += 1
            if np.random.random() < _split_prob(alpha, beta, depth, max_depth):
                splits[depth] += 1
                stack[top] = depth + 1
                stack[top + 1] = depth + 1
                top += 2
    return splits, visits


def sample_tree_prior(alpha, beta, n_draws=10_000, seed=0, max_depth=MAX_DEPTH):
    """Draw trees from the branching prior; return per-depth split frequencies.

    Returns ``(frequency, visits)`` arrays indexed by depth; ``frequency[q]``
    is the share of depth-``q`` nodes that split (nan where never visited).
    """
    splits, visits = _sample_prior_depths(float(alpha), float(beta), int(n_draws),
                                          int(max_depth), int(seed) % (2**32))
    with np.errstate(invalid="ignore", divide="ignore"):
        return splits / visits, visits


def quantile_cutpoints(col, n_cuts=N_CUTS):
    """Distinct interior quantiles of ``col``; every cut leaves units on both sides."""
    qs = np.quantile(col, np.arange(1, n_cuts + 1) / (n_cuts + 1))
    cuts = np.unique(qs)
    return cuts[cuts < col.max()]


def bin_features(x, n_cuts=N_CUTS):
    """Cut grids per column and the binned matrix.

    ``x[i, j] <= cuts[j][k]`` exactly when ``xb[i, j] <= k``.
    """
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    ncut = np.zeros(p, dtype=np.int64)
    xb = np.zeros((n, p), dtype=np.int64)
    cuts = []
    for j in range(p):
        c = quantile_cutpoints(x[:, j], n_cuts)
        cuts.append(c)
        ncut[j] = c.size
        xb[:, j] = np.searchsorted(c, x[:, j], side="left")
    return cuts, ncut, xb


@njit(cache=True)
def _depth(node):
    d = 0
    while node > 0:
        node = (node - 1) // 2
        d += 1
    return d


@njit(cache=True)
def _log_marginal(n_eff, s, sigma2, v):
    return -0.5 * np.log(1.0 + n_eff * v / sigma2) + v * s * s / (2.0 * sigma2 * (sigma2 + n_eff * v))


@njit(cache=True)
def _count_nodes(state, max_depth):
    """Leaves, growable leaves and prunable nodes (splits with two leaf children)."""
    leaves = 0
    growable = 0
    prunable = 0
    for k in range(state.shape[0]):
        if state[k] == 1:
            leaves += 1
            if _depth(k) < max_depth:
                growable += 1
        elif state[k] == 2:
            if state[2 * k + 1] == 1 and state[2 * k + 2] == 1:
                prunable += 1
    return leaves, growable, prunable


@njit(cache=True)
def _pick(state, want, max_depth, index):
    """The ``index``-th node (in heap order) that is a growable leaf (want=1) or prunable (want=2)."""
    seen = 0
    for k in range(state.shape[0]):
        if want == 1:
            ok = state[k] == 1 and _depth(k) < max_depth
        else:
            ok = state[k] == 2 and state[2 * k + 1] == 1 and state[2 * k + 2] == 1
        if ok:
            if seen == index:
                return k
            seen += 1
    return -1


@njit(cache=True)
def _update_tree(state, var, cut, val, leaf_of, xb, ncut, b, partial, sigma2, v,
                 alpha, beta, max_depth, min_leaf):
    """One grow/prune step plus a leaf-value draw for a single tree.

    ``partial`` is the residual with this tree's contribution added back.
    Returns False if leaf values stayed non-finite after retries.
    """
    n = xb.shape[0]
    p = xb.shape[1]
    leaves, growable, prunable = _count_nodes(state, max_depth)
    grow = leaves == 1 or np.random.random() < 0.5
    p_grow_here = 1.0 if leaves == 1 else 0.5
    if grow and growable > 0:
        node = _pick(state, 1, max_depth, np.random.randint(growable))
        j = np.random.randint(p)
        if ncut[j] > 0:
            c = np.random.randint(ncut[j])
            nl = 0.0
            sl = 0.0
            nr = 0.0
            sr = 0.0
            for i in range(n):
                if leaf_of[i] == node:
                    if xb[i, j] <= c:
                        nl += b[i] * b[i]
                        sl += b[i] * partial[i]
                    else:
                        nr += b[i] * b[i]
                        sr += b[i] * partial[i]
            if nl >= min_leaf and nr >= min_leaf:
                d = _depth(node)
                w2 = prunable + 1
                if node > 0:
                    sib = node + 1 if node % 2 == 1 else node - 1
                    if state[sib] == 1:
                        w2 -= 1
                ps = _split_prob(alpha, beta, d, max_depth)
                pc = _split_prob(alpha, beta, d + 1, max_depth)
                log_r = (np.log(0.5 / p_grow_here) + np.log(growable) - np.log(w2)
                         + np.log(ps) + 2.0 * np.log(1.0 - pc) - np.log(1.0 - ps)
                         + _log_marginal(nl, sl, sigma2, v) + _log_marginal(nr, sr, sigma2, v)
                         - _log_marginal(nl + nr, sl + sr, sigma2, v))
                if np.log(np.random.random()) < log_r:
                    state[node] = 2
                    var[node] = j
                    cut[node] = c
                    state[2 * node + 1] = 1
                    state[2 * node + 2] = 1
                    for i in range(n):
                        if leaf_of[i] == node:
                            leaf_of[i] = 2 * node + 1 if xb[i, j] <= c else 2 * node + 2
    elif not grow and prunable > 0:
        node = _pick(state, 2, max_depth, np.random.randint(prunable))
        left = 2 * node + 1
        right = 2 * node + 2
        nl = 0.0
        sl = 0.0
        nr = 0.0
        sr = 0.0
        for i in range(n):
            if leaf_of[i] == left:
                nl += b[i] * b[i]
                sl += b[i] * partial[i]
            elif leaf_of[i] == right:
                nr += b[i] * b[i]
                sr += b[i] * partial[i]
        d = _depth(node)
        child_growable = 2 if d + 1 < max_depth else 0
        growable_after = growable - child_growable + 1
        p_grow_after = 1.0 if node == 0 else 0.5
        ps = _split_prob(alpha, beta, d, max_depth)
        pc = _split_prob(alpha, beta, d + 1, max_depth)
        log_r = (np.log(p_grow_after / 0.5) + np.log(prunable) - np.log(growable_after)
                 + np.log(1.0 - ps) - np.log(ps) - 2.0 * np.log(1.0 - pc)
                 + _log_marginal(nl + nr, sl + sr, sigma2, v)
                 - _log_marginal(nl, sl, sigma2, v) - _log_marginal(nr, sr, sigma2, v))
        if np.log(np.random.random()) < log_r:
            state[node] = 1
            state[left] = 0
            state[right] = 0
            for i in range(n):
                if leaf_of[i] == left or leaf_of[i] == right:
                    leaf_of[i] = node
    size = state.shape[0]
    n_eff = np.zeros(size)
    s = np.zeros(size)
    for i in range(n):
        n_eff[leaf_of[i]] += b[i] * b[i]
        s[leaf_of[i]] += b[i] * partial[i]
    for k in range(size):
        if state[k] != 1:
            continue
        post_var = 1.0 / (n_eff[k] / sigma2 + 1.0 / v)
        mean = post_var * s[k] / sigma2
        ok = False
        for _ in range(10):
            draw = mean + np.sqrt(post_var) * np.random.normal()
            if np.isfinite(draw):
                ok = True
                break
        if not ok:
            return False
        val[k] = draw
    return True


@njit(cache=True)
def _bcf(ys, t, xb_mu, ncut_mu, xb_tau, ncut_tau, m_mu, m_tau, alpha_mu, beta_mu,
         alpha_tau, beta_tau, v_mu, v_tau, nu, lam, burn_in, kept, max_depth, min_leaf, seed):
    np.random.seed(seed)
    n = ys.shape[0]
    size = 2 ** (max_depth + 1) - 1
    st_mu = np.zeros((m_mu, size), dtype=np.int8)
    var_mu = np.zeros((m_mu, size), dtype=np.int64)
    cut_mu = np.zeros((m_mu, size), dtype=np.int64)
    val_mu = np.zeros((m_mu, size))
    leaf_mu = np.zeros((m_mu, n), dtype=np.int64)
    st_tau = np.zeros((m_tau, size), dtype=np.int8)
    var_tau = np.zeros((m_tau, size), dtype=np.int64)
    cut_tau = np.zeros((m_tau, size), dtype=np.int64)
    val_tau = np.zeros((m_tau, size))
    leaf_tau = np.zeros((m_tau, n), dtype=np.int64)
    for h in range(m_mu):
        st_mu[h, 0] = 1
    for h in range(m_tau):
        st_tau[h, 0] = 1
    ones = np.ones(n)
    mu_fit = np.zeros(n)
    tau_fit = np.zeros(n)
    resid = ys.copy()
    partial = np.empty(n)
    old = np.empty(n)
    sigma2 = 1.0
    out_tau = np.empty((kept, n))
    out_sigma = np.empty(kept)
    for sweep in range(burn_in + kept):
        for h in range(m_mu):
            for i in range(n):
                old[i] = val_mu[h, leaf_mu[h, i]]
                partial[i] = resid[i] + old[i]
            if not _update_tree(st_mu[h], var_mu[h], cut_mu[h], val_mu[h], leaf_mu[h], xb_mu,
                                ncut_mu, ones, partial, sigma2, v_mu, alpha_mu, beta_mu,
                                max_depth, min_leaf):
                return out_tau, out_sigma, False
            for i in range(n):
                new = val_mu[h, leaf_mu[h, i]]
                mu_fit[i] += new - old[i]
                resid[i] = partial[i] - new
        for h in range(m_tau):
            for i in range(n):
                old[i] = val_tau[h, leaf_tau[h, i]]
                partial[i] = resid[i] + t[i] * old[i]
            if not _update_tree(st_tau[h], var_tau[h], cut_tau[h], val_tau[h], leaf_tau[h], xb_tau,
                                ncut_tau, t, partial, sigma2, v_tau, alpha_tau, beta_tau,
                                max_depth, min_leaf):
                return out_tau, out_sigma, False
            for i in range(n):
                new = val_tau[h, leaf_tau[h, i]]
                tau_fit[i] += new - old[i]
                resid[i] = partial[i] - t[i] * new
        # recompute from scratch to stop floating-point drift in the running sums
        for i in range(n):
            acc = 0.0
            for h in range(m_tau):
                acc += val_tau[h, leaf_tau[h, i]]
            tau_fit[i] = acc
            acc = 0.0
            for h in range(m_mu):
                acc += val_mu[h, leaf_mu[h, i]]
            mu_fit[i] = acc
            resid[i] = ys[i] - mu_fit[i] - t[i] * tau_fit[i]
        ssr = 0.0
        for i in range(n):
            ssr += resid[i] * resid[i]
        sigma2 = 1.0 / np.random.gamma(0.5 * (nu + n), 2.0 / (nu * lam + ssr))
        if sweep >= burn_in:
            out_tau[sweep - burn_in] = tau_fit
            out_sigma[sweep - burn_in] = np.sqrt(sigma2)
    return out_tau, out_sigma, True


def _sigma_prior(ys, design, df, quantile):
    """Scale ``lam`` of the ``IG(df/2, df*lam/2)`` prior on sigma^2."""
    coef, *_ = np.linalg.lstsq(design, ys, rcond=None)
    dof = max(ys.size - design.shape[1], 1)
    sigma_hat2 = float(np.sum((ys - design @ coef) ** 2) / dof)
    return sigma_hat2 * chi2.ppf(1 - quantile, df) / df


def fit_bcf(ds, rho, config=None, seed=0):
    """Sample the causal forest posterior; return per-unit effect draws.

    The outcome is standardized inside the fit. Leaf values get a
    ``N(0, v)`` prior with ``2 sqrt(v) = range(y) / (2 sqrt(trees))`` so that
    the forest's prior spans the outcome range.
    """
    config = (config or BcfConfig()).validate()
    ds.require_both_arms(MIN_ARM)
    rho_x = rho.predict(ds.x)
    y_mean, y_sd = ds.y.mean(), ds.y.std()
    if not y_sd > 0:
        raise ContractError("outcome has zero variance")
    ys = (ds.y - y_mean) / y_sd
    _, ncut_mu, xb_mu = bin_features(np.column_stack([ds.x, rho_x]))
    _, ncut_tau, xb_tau = bin_features(ds.x)
    spread = float(np.ptp(ys))
    v_mu = (spread / (4 * np.sqrt(config.trees_prognostic))) ** 2
    v_tau = (spread / (4 * np.sqrt(config.trees_treatment))) ** 2
    lam = _sigma_prior(ys, np.column_stack([np.ones(ds.n), ds.x, ds.t]), config.sigma_df,
                       config.sigma_quantile)
    tau, sigma, ok = _bcf(ys, ds.t.astype(float), xb_mu, ncut_mu, xb_tau, ncut_tau,
                          int(config.trees_prognostic), int(config.trees_treatment),
                          float(config.alpha_prognostic), float(config.beta_prognostic),
                          float(config.alpha_treatment), float(config.beta_treatment),
                          v_mu, v_tau, float(config.sigma_df), lam, int(config.burn_in),
                          int(config.kept), MAX_DEPTH, float(config.min_leaf),
                          int(seed) % (2**32))
    if not ok or not np.all(np.isfinite(tau)):
        raise NumericalError("BCF leaf values stayed non-finite after resampling", tag="BCF_NONFINITE")
    diagnostics = {"sigma_mean": float(y_sd * sigma.mean()), "burn_in": config.burn_in,
                   "kept": config.kept}
    return PosteriorEffect(y_sd * tau, "BCF", True, diagnostics)
