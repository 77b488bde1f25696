"""Small numpy classifiers used to fill hyperparameter-grid tensors."""
from __future__ import annotations

import numpy as np

__all__ = ["make_blobs", "f1_score", "knn_predict", "DecisionTree", "TinyMLP"]


def make_blobs(n_samples: int = 200, n_features: int = 4, positive_share: float = 0.6,
               separation: float = 1.0, seed: int = 0, holdout: float = 0.3):
    """Two Gaussian blobs, class 1 centred at ``+separation/2`` on every axis.

    Returns ``(x_train, y_train, x_test, y_test)``; the split is seeded.
    """
    rng = np.random.default_rng(seed)
    n_pos = int(round(positive_share * n_samples))
    y = np.r_[np.ones(n_pos, dtype=np.int64), np.zeros(n_samples - n_pos, dtype=np.int64)]
    centers = np.where(y[:, None] == 1, separation / 2, -separation / 2)
    x = centers + rng.normal(size=(n_samples, n_features))
    perm = rng.permutation(n_samples)
    n_test = int(round(holdout * n_samples))
    test, train = perm[:n_test], perm[n_test:]
    return x[train], y[train], x[test], y[test]


def f1_score(y_true, y_pred) -> float:
    """F1 of the positive class; 0 when there are no true positives."""
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    if tp == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def knn_predict(x_train, y_train, x_test, k: int, p: float = 2.0, weights: str = "uniform"):
    """k-nearest-neighbour vote under the Minkowski ``p`` distance.

    Ties go to the training majority class.
    """
    k = int(k)
    if not 1 <= k <= len(x_train):
        raise ValueError(f"k must be in [1, {len(x_train)}], got {k}")
    if weights not in ("uniform", "distance"):
        raise ValueError(f"unknown weighting {weights!r}")
    d = (np.abs(x_test[:, None, :] - x_train[None, :, :]) ** p).sum(axis=2) ** (1.0 / p)
    nn = np.argsort(d, axis=1, kind="stable")[:, :k]
    dn = np.take_along_axis(d, nn, axis=1)
    if weights == "uniform":
        w = np.ones_like(dn)
    else:
        w = 1.0 / np.maximum(dn, 1e-12)
    votes = y_train[nn]
    score1 = (w * (votes == 1)).sum(axis=1)
    score0 = (w * (votes == 0)).sum(axis=1)
    majority = int(np.sum(y_train == 1) >= np.sum(y_train == 0))
    return np.where(score1 > score0, 1, np.where(score0 > score1, 0, majority))


class DecisionTree:
    """CART classifier with Gini splits, depth/leaf limits and per-split
    random feature subsampling."""

    def __init__(self, max_depth: int = 3, min_leaf: int = 1, max_features: float = 1.0, seed: int = 0):
        if max_depth < 1 or min_leaf < 1 or not 0 < max_features <= 1:
            raise ValueError("invalid decision tree configuration")
        self.max_depth, self.min_leaf, self.max_features = int(max_depth), int(min_leaf), float(max_features)
        self.rng = np.random.default_rng(seed)
        self.tree = None

    def fit(self, x, y):
        self.n_features = x.shape[1]
        self.tree = self._grow(x, y, 0)
        return self

    def _leaf(self, y):
        return ("leaf", int(np.sum(y == 1) > np.sum(y == 0)))

    @staticmethod
    def _gini(counts1, counts):
        p = counts1 / counts
        return 1.0 - p**2 - (1 - p) ** 2

    def _grow(self, x, y, depth):
        if depth >= self.max_depth or len(y) < 2 * self.min_leaf or np.all(y == y[0]):
            return self._leaf(y)
        n_try = max(1, int(round(self.max_features * self.n_features)))
        feats = np.sort(self.rng.choice(self.n_features, size=n_try, replace=False))
        best = None
        n = len(y)
        for f in feats:
            order = np.argsort(x[:, f], kind="stable")
            xs, ys = x[order, f], y[order]
            left1 = np.cumsum(ys)[:-1]
            left_n = np.arange(1, n)
            right1 = ys.sum() - left1
            right_n = n - left_n
            valid = (xs[1:] > xs[:-1]) & (left_n >= self.min_leaf) & (right_n >= self.min_leaf)
            if not np.any(valid):
                continue
            cost = (left_n * self._gini(left1, left_n) + right_n * self._gini(right1, right_n)) / n
            cost = np.where(valid, cost, np.inf)
            i = int(np.argmin(cost))
            if best is None or cost[i] < best[0]:
                best = (cost[i], f, 0.5 * (xs[i] + xs[i + 1]))
        if best is None:
            return self._leaf(y)
        _, f, thr = best
        mask = x[:, f] <= thr
        return ("split", int(f), float(thr),
                self._grow(x[mask], y[mask], depth + 1),
                self._grow(x[~mask], y[~mask], depth + 1))

    def predict(self, x):
        out = np.empty(len(x), dtype=np.int64)
        for i, row in enumerate(x):
            node = self.tree
            while node[0] == "split":
                node = node[3] if row[node[1]] <= node[2] else node[4]
            out[i] = node[1]
        return out


class TinyMLP:
    """Feed-forward binary classifier trained by full-batch gradient
    descent on the logistic loss."""

    def __init__(self, layers: int = 1, hidden: int = 8, epochs: int = 50, lr: float = 0.1, seed: int = 0):
        if layers < 1 or hidden < 1 or epochs < 0 or lr <= 0:
            raise ValueError("invalid MLP configuration")
        self.layers, self.hidden, self.epochs, self.lr = int(layers), int(hidden), int(epochs), float(lr)
        self.seed = seed

    def fit(self, x, y):
        rng = np.random.default_rng(self.seed)
        sizes = [x.shape[1]] + [self.hidden] * self.layers + [1]
        self.w = [rng.normal(0, np.sqrt(2.0 / a), size=(a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
        self.b = [np.zeros(b) for b in sizes[1:]]
        y = y.astype(np.float64)
        for _ in range(self.epochs):
            acts, zs = self._forward(x)
            p = 1.0 / (1.0 + np.exp(-zs[-1][:, 0]))
            delta = ((p - y) / len(y))[:, None]
            for layer in range(len(self.w) - 1, -1, -1):
                gw = acts[layer].T @ delta
                gb = delta.sum(axis=0)
                if layer:
                    delta = (delta @ self.w[layer].T) * (zs[layer - 1] > 0)
                self.w[layer] -= self.lr * gw
                self.b[layer] -= self.lr * gb
        return self

    def _forward(self, x):
        acts, zs = [x], []
        for layer, (w, b) in enumerate(zip(self.w, self.b)):
            z = acts[-1] @ w + b
            zs.append(z)
            if layer < len(self.w) - 1:
                acts.append(np.maximum(z, 0.0))
        return acts, zs

    def predict(self, x):
        return (self._forward(x)[1][-1][:, 0] > 0).astype(np.int64)
