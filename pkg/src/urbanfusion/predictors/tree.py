"""Decision tree with binary numeric splits and reduced-error pruning."""

from __future__ import annotations

import numpy as np

from ..errors import EmptyTrain, SingleClass, UntrainedModel


def _entropy(counts: np.ndarray) -> np.ndarray:
    """Entropy (bits) along the last axis of a count array."""
    total = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(total > 0, counts / total, 0.0)
        logs = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -(p * logs).sum(axis=-1)


def best_split(X: np.ndarray, yi: np.ndarray, n_classes: int, min_leaf: int):
    """Highest information-gain threshold split over all features.

    Returns ``(feature, threshold, gain)`` or ``None`` when no split with at
    least ``min_leaf`` rows per side improves on the parent entropy. Candidate
    thresholds are midpoints between consecutive distinct values.
    """
    n, nf = X.shape
    if n < 2 * min_leaf:
        return None
    parent = np.bincount(yi, minlength=n_classes).astype(float)
    h_parent = float(_entropy(parent))
    best = None
    onehot = np.eye(n_classes)[yi]
    for f in range(nf):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        left = np.cumsum(onehot[order], axis=0)[:-1]
        nl = np.arange(1, n)
        ok = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (n - nl >= min_leaf)
        if not ok.any():
            continue
        left = left[ok]
        right = parent - left
        nl = nl[ok].astype(float)
        h = (nl * _entropy(left) + (n - nl) * _entropy(right)) / n
        k = int(np.argmin(h))
        gain = h_parent - float(h[k])
        if gain > 1e-12 and (best is None or gain > best[2] + 1e-12):
            pos = np.flatnonzero(ok)[k]
            best = (f, 0.5 * (xs[pos] + xs[pos + 1]), gain)
    return best


class RepTree:
    """Information-gain tree pruned against a seeded holdout.

    Rows with ``x[feature] <= threshold`` go left. Pruning replaces a subtree by
    a leaf whenever that does not increase the error on the holdout rows.
    """

    def __init__(self, min_leaf: int = 2, max_depth: int | None = None, prune: bool = True,
                 holdout: float = 0.25, seed: int = 0):
        self.min_leaf = min_leaf
        self.max_depth = max_depth
        self.prune = prune
        self.holdout = holdout
        self.seed = seed
        self.classes_ = None

    # Node arrays: feature (-1 for leaves), threshold, left, right, counts.
    def _grow(self, X, yi):
        feat, thr, left, right, counts = [], [], [], [], []
        stack = [(np.arange(len(yi)), 0, None, None)]
        while stack:
            idx, depth, parent, side = stack.pop()
            node = len(feat)
            if parent is not None:
                (left if side == 0 else right)[parent] = node
            c = np.bincount(yi[idx], minlength=len(self.classes_))
            feat.append(-1)
            thr.append(np.nan)
            left.append(-1)
            right.append(-1)
            counts.append(c)
            if np.count_nonzero(c) < 2 or (self.max_depth is not None and depth >= self.max_depth):
                continue
            split = best_split(X[idx], yi[idx], len(self.classes_), self.min_leaf)
            if split is None:
                continue
            f, t, _ = split
            feat[node], thr[node] = f, t
            go_left = X[idx, f] <= t
            stack.append((idx[~go_left], depth + 1, node, 1))
            stack.append((idx[go_left], depth + 1, node, 0))
        self.feature_ = np.array(feat)
        self.threshold_ = np.array(thr)
        self.left_ = np.array(left)
        self.right_ = np.array(right)
        self.counts_ = np.array(counts, dtype=float)

    def _leaves(self, X):
        node = np.zeros(len(X), dtype=int)
        while True:
            inner = self.feature_[node] >= 0
            if not inner.any():
                return node
            n = node[inner]
            go_left = X[inner, self.feature_[n]] <= self.threshold_[n]
            node[inner] = np.where(go_left, self.left_[n], self.right_[n])

    def _holdout_error(self, X, yi) -> int:
        pred = self.counts_[self._leaves(X)].argmax(axis=1)
        return int(np.count_nonzero(pred != yi))

    def _prune(self, X, yi):
        # Route holdout rows through every node, then prune children before parents.
        n_nodes = len(self.feature_)
        member = [None] * n_nodes
        member[0] = np.arange(len(yi))
        order = []
        stack = [0]
        while stack:
            k = stack.pop()
            order.append(k)
            if self.feature_[k] >= 0:
                rows = member[k]
                go_left = X[rows, self.feature_[k]] <= self.threshold_[k]
                member[self.left_[k]] = rows[go_left]
                member[self.right_[k]] = rows[~go_left]
                stack.extend([self.left_[k], self.right_[k]])
        err = np.zeros(n_nodes)
        for k in reversed(order):
            as_leaf = np.count_nonzero(yi[member[k]] != self.counts_[k].argmax())
            if self.feature_[k] < 0:
                err[k] = as_leaf
                continue
            subtree = err[self.left_[k]] + err[self.right_[k]]
            if as_leaf <= subtree:
                self.feature_[k] = -1
                err[k] = as_leaf
            else:
                err[k] = subtree

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if len(y) == 0:
            raise EmptyTrain("no training rows")
        self.classes_, yi = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise SingleClass(f"only class {self.classes_[0]!r} present")
        rng = np.random.default_rng(self.seed)
        n_hold = int(round(self.holdout * len(y))) if self.prune else 0
        if n_hold >= 1 and len(y) - n_hold >= 2 * self.min_leaf:
            perm = rng.permutation(len(y))
            hold, grow = np.sort(perm[:n_hold]), np.sort(perm[n_hold:])
        else:
            hold, grow = np.empty(0, dtype=int), np.arange(len(y))
        self._grow(X[grow], yi[grow])
        self.holdout_error_unpruned_ = self._holdout_error(X[hold], yi[hold]) if hold.size else 0
        if hold.size:
            self._prune(X[hold], yi[hold])
        self.holdout_error_ = self._holdout_error(X[hold], yi[hold]) if hold.size else 0
        return self

    def _check(self):
        if self.classes_ is None:
            raise UntrainedModel("tree has not been trained")

    def predict_scores(self, X) -> np.ndarray:
        """Leaf class frequencies, one column per entry of ``classes_``."""
        self._check()
        c = self.counts_[self._leaves(np.asarray(X, dtype=float))]
        return c / c.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        self._check()
        return self.classes_[self.counts_[self._leaves(np.asarray(X, dtype=float))].argmax(axis=1)]

    @property
    def n_leaves(self) -> int:
        self._check()
        return int(np.count_nonzero(self.feature_[self._reachable()] < 0))

    def _reachable(self):
        seen, stack = [], [0]
        while stack:
            k = stack.pop()
            seen.append(k)
            if self.feature_[k] >= 0:
                stack.extend([self.left_[k], self.right_[k]])
        return np.array(seen)

    @property
    def root(self):
        """``(feature, threshold)`` of the root split, or ``None`` for a single leaf."""
        self._check()
        if self.feature_[0] < 0:
            return None
        return int(self.feature_[0]), float(self.threshold_[0])
