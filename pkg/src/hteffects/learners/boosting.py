"""Least-squares gradient boosting with axis-aligned regression trees.

Trees are grown level by level. At each level every feature is scanned once in
presorted order and each candidate threshold (midpoint between consecutive
distinct values inside a node) is scored by variance reduction. The first
best candidate wins, so ties go to the lowest feature index and then the
smallest threshold. Rows with ``x <= threshold`` go left.

Each tree is stored in flat arrays indexed by node id; ``feature == -1``
marks a leaf.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..errors import ContractError


@dataclass(frozen=True)
class GbrConfig:
    n_trees: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    min_leaf: int = 5
    subsample: float = 1.0

    def validate(self):
        if self.n_trees < 1:
            raise ContractError("n_trees must be at least 1")
        if not 0 < self.learning_rate <= 1:
            raise ContractError("learning_rate must lie in (0, 1]")
        if self.max_depth < 1:
            raise ContractError("max_depth must be at least 1")
        if self.min_leaf < 1:
            raise ContractError("min_leaf must be at least 1")
        if not 0 < self.subsample <= 1:
            raise ContractError("subsample must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, x):
        x = np.ascontiguousarray(x, dtype=float)
        return _tree_predict(x, self.feature, self.threshold, self.left, self.right, self.value)

    @property
    def n_nodes(self):
        return int(np.count_nonzero(self.left != -2))

    def used_features(self):
        return set(int(f) for f in self.feature if f >= 0)


@dataclass(frozen=True, eq=False)
class BoostedTreeModel:
    initial: float
    learning_rate: float
    config: GbrConfig
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    train_loss: np.ndarray

    @property
    def n_trees(self):
        return self.feature.shape[0]

    @property
    def trees(self):
        return [
            RegressionTree(self.feature[m], self.threshold[m], self.left[m], self.right[m], self.value[m])
            for m in range(self.n_trees)
        ]

    def tree_sum(self, x):
        x = np.ascontiguousarray(x, dtype=float)
        return _ensemble_sum(x, self.feature, self.threshold, self.left, self.right, self.value)

    def predict(self, x):
        return self.initial + self.learning_rate * self.tree_sum(x)

    def used_features(self):
        return set(int(f) for f in np.unique(self.feature) if f >= 0)


@njit(cache=True)
def _tree_predict(x, feature, threshold, left, right, value):
    n = x.shape[0]
    out = np.empty(n)
    for i in range(n):
        k = 0
        while feature[k] >= 0:
            if x[i, feature[k]] <= threshold[k]:
                k = left[k]
            else:
                k = right[k]
        out[i] = value[k]
    return out


@njit(cache=True)
def _ensemble_sum(x, feature, threshold, left, right, value):
    n = x.shape[0]
    out = np.zeros(n)
    for m in range(feature.shape[0]):
        for i in range(n):
            k = 0
            while feature[m, k] >= 0:
                if x[i, feature[m, k]] <= threshold[m, k]:
                    k = left[m, k]
                else:
                    k = right[m, k]
            out[i] += value[m, k]
    return out


@njit(cache=True)
def _grow_tree(x, order, r, in_sample, max_depth, min_leaf, feature, threshold, left, right, value):
    n, d = x.shape
    max_nodes = feature.shape[0]
    node_of = np.full(n, -1, np.int64)
    for i in range(n):
        if in_sample[i]:
            node_of[i] = 0
    for k in range(max_nodes):
        feature[k] = -1
        threshold[k] = 0.0
        left[k] = -2
        right[k] = -2
        value[k] = 0.0
    left[0] = -1
    right[0] = -1
    n_nodes = 1
    frontier = np.zeros(max_nodes, np.bool_)
    frontier[0] = True
    tot_s = np.zeros(max_nodes)
    tot_n = np.zeros(max_nodes, np.int64)
    best_gain = np.zeros(max_nodes)
    best_feat = np.full(max_nodes, -1, np.int64)
    best_thr = np.zeros(max_nodes)
    run_s = np.zeros(max_nodes)
    run_n = np.zeros(max_nodes, np.int64)
    last = np.zeros(max_nodes)

    for depth in range(max_depth):
        tot_s[:] = 0.0
        tot_n[:] = 0
        for i in range(n):
            nd = node_of[i]
            if nd >= 0 and frontier[nd]:
                tot_s[nd] += r[i]
                tot_n[nd] += 1
        best_gain[:] = 0.0
        best_feat[:] = -1
        for f in range(d):
            run_s[:] = 0.0
            run_n[:] = 0
            for p in range(n):
                i = order[p, f]
                nd = node_of[i]
                if nd < 0 or not frontier[nd]:
                    continue
                v = x[i, f]
                nl = run_n[nd]
                if nl > 0 and v > last[nd]:
                    nr = tot_n[nd] - nl
                    if nl >= min_leaf and nr >= min_leaf:
                        sl = run_s[nd]
                        sr = tot_s[nd] - sl
                        gain = sl * sl / nl + sr * sr / nr - tot_s[nd] * tot_s[nd] / tot_n[nd]
                        if gain > best_gain[nd]:
                            best_gain[nd] = gain
                            best_feat[nd] = f
                            mid = 0.5 * (last[nd] + v)
                            if not mid < v:
                                mid = last[nd]
                            best_thr[nd] = mid
                run_s[nd] += r[i]
                run_n[nd] += 1
                last[nd] = v
        any_split = False
        next_frontier = np.zeros(max_nodes, np.bool_)
        for nd in range(n_nodes):
            if frontier[nd] and best_feat[nd] >= 0:
                any_split = True
                feature[nd] = best_feat[nd]
                threshold[nd] = best_thr[nd]
                left[nd] = n_nodes
                right[nd] = n_nodes + 1
                for c in (n_nodes, n_nodes + 1):
                    left[c] = -1
                    right[c] = -1
                    next_frontier[c] = True
                n_nodes += 2
        if not any_split:
            break
        for i in range(n):
            nd = node_of[i]
            if nd >= 0 and frontier[nd] and feature[nd] >= 0:
                if x[i, feature[nd]] <= threshold[nd]:
                    node_of[i] = left[nd]
                else:
                    node_of[i] = right[nd]
        frontier = next_frontier

    sums = np.zeros(max_nodes)
    counts = np.zeros(max_nodes, np.int64)
    for i in range(n):
        nd = node_of[i]
        if nd >= 0:
            sums[nd] += r[i]
            counts[nd] += 1
    for k in range(n_nodes):
        if feature[k] < 0 and counts[k] > 0:
            value[k] = sums[k] / counts[k]


@njit(cache=True)
def _boost(x, order, y, initial, masks, learning_rate, max_depth, min_leaf,
           feature, threshold, left, right, value, train_loss):
    n = x.shape[0]
    n_trees = feature.shape[0]
    tree_sum = np.zeros(n)
    r = np.empty(n)
    loss = 0.0
    for i in range(n):
        r[i] = y[i] - initial
        loss += r[i] * r[i]
    train_loss[0] = loss / n
    for m in range(n_trees):
        _grow_tree(x, order, r, masks[m], max_depth, min_leaf,
                   feature[m], threshold[m], left[m], right[m], value[m])
        out = _tree_predict(x, feature[m], threshold[m], left[m], right[m], value[m])
        loss = 0.0
        for i in range(n):
            tree_sum[i] += out[i]
            r[i] = y[i] - (initial + learning_rate * tree_sum[i])
            loss += r[i] * r[i]
        train_loss[m + 1] = loss / n


def fit_gbr(x, y, config=None, seed=0, **overrides):
    """Stagewise least-squares boosting.

    Tree ``m`` is fitted to the residuals ``y - F_{m-1}(x)`` and its leaves
    hold residual means; ``F_m = F_{m-1} + learning_rate * tree_m``. With
    ``subsample == 1`` the training MSE sequence ``train_loss`` is
    non-increasing. Subsampling draws rows without replacement from a
    generator seeded by ``seed``.
    """
    config = config or GbrConfig()
    if overrides:
        config = GbrConfig(**{**config.__dict__, **overrides})
    config.validate()
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ContractError("expected x of shape (n, d) and y of shape (n,)")
    if not np.all(np.isfinite(y)):
        raise ContractError("target contains NaN or infinite values")
    n = x.shape[0]
    if n < config.min_leaf:
        raise ContractError(f"{n} rows cannot fill a leaf of min_leaf={config.min_leaf}")

    masks = np.ones((config.n_trees, n), dtype=np.bool_)
    if config.subsample < 1:
        rng = np.random.default_rng(seed)
        size = max(config.min_leaf, int(round(config.subsample * n)))
        masks[:] = False
        for m in range(config.n_trees):
            masks[m, rng.choice(n, size=size, replace=False)] = True

    max_nodes = 2 ** (config.max_depth + 1) - 1
    shape = (config.n_trees, max_nodes)
    feature = np.empty(shape, np.int64)
    threshold = np.empty(shape)
    left = np.empty(shape, np.int64)
    right = np.empty(shape, np.int64)
    value = np.empty(shape)
    train_loss = np.empty(config.n_trees + 1)
    order = np.ascontiguousarray(np.argsort(x, axis=0, kind="stable"))
    initial = float(y.mean())
    _boost(x, order, y, initial, masks, float(config.learning_rate), int(config.max_depth),
           int(config.min_leaf), feature, threshold, left, right, value, train_loss)
    return BoostedTreeModel(initial, float(config.learning_rate), config,
                            feature, threshold, left, right, value, train_loss)
