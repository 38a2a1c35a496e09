"""Classical regression baselines: ridge-stabilised linear regression and a random forest."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError

DEFAULT_RIDGE = 1e-8


@dataclass
class LinearModel:
    weights: np.ndarray
    intercept: float
    ridge_lambda: float = DEFAULT_RIDGE

    def predict(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.weights.size:
            raise ConfigError(f"linear model expects (n, {self.weights.size}) input, got {x.shape}")
        return x @ self.weights + self.intercept

    def to_dict(self):
        return {
            "kind": "linear",
            "weights": self.weights.tolist(),
            "intercept": self.intercept,
            "ridge_lambda": self.ridge_lambda,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["weights"], dtype=np.float64), float(d["intercept"]), float(d["ridge_lambda"]))


def fit_linear_regression(ds, ridge_lambda=DEFAULT_RIDGE):
    """Solve ``(A^T A + lambda P) w = A^T y`` for ``A = [X | 1]``.

    ``P`` is the identity on the feature weights and zero on the intercept, so
    the penalty never pulls the intercept away from the target mean.
    """
    if ridge_lambda < 0:
        raise ConfigError("ridge_lambda must be >= 0")
    x = ds.features
    n, d = x.shape
    a = np.hstack([x, np.ones((n, 1))])
    gram = a.T @ a
    penalty = np.eye(d + 1) * ridge_lambda
    penalty[d, d] = 0.0
    lhs = gram + penalty
    rhs = a.T @ ds.targets
    if ridge_lambda == 0 and np.linalg.matrix_rank(lhs) < d + 1:
        raise NumericError("normal equations are singular; use ridge_lambda > 0")
    try:
        sol = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError:
        raise NumericError("normal equations are singular; use ridge_lambda > 0") from None
    return LinearModel(sol[:d].copy(), float(sol[d]), float(ridge_lambda))


@dataclass
class RegressionTree:
    """Array-encoded binary tree; ``feature == -1`` marks a leaf."""

    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)
    n_samples: list = field(default_factory=list)

    def _add(self, value, n):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.n_samples.append(n)
        return len(self.value) - 1

    def depth(self, node=0):
        if self.feature[node] == -1:
            return 0
        return 1 + max(self.depth(self.left[node]), self.depth(self.right[node]))

    def predict(self, x):
        out = np.empty(x.shape[0])
        for i, row in enumerate(x):
            node = 0
            while self.feature[node] != -1:
                node = self.left[node] if row[self.feature[node]] <= self.threshold[node] else self.right[node]
            out[i] = self.value[node]
        return out

    def to_dict(self):
        return {k: list(getattr(self, k)) for k in ("feature", "threshold", "left", "right", "value", "n_samples")}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: list(v) for k, v in d.items()})


def _best_split(x, y, features, min_leaf):
    """Best (feature, threshold, sse) over ``features`` by total within-child squared error."""
    n = y.size
    best = None
    for f in features:
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        k = np.arange(min_leaf, n - min_leaf + 1)  # left size
        if k.size == 0:
            continue
        valid = xs[k - 1] < xs[np.minimum(k, n - 1)]
        k = k[valid & (k < n)]
        if k.size == 0:
            continue
        left_sum, left_sq = csum[k - 1], csq[k - 1]
        right_sum, right_sq = csum[-1] - left_sum, csq[-1] - left_sq
        sse = (left_sq - left_sum**2 / k) + (right_sq - right_sum**2 / (n - k))
        j = int(np.argmin(sse))
        if best is None or sse[j] < best[2]:
            best = (int(f), 0.5 * (xs[k[j] - 1] + xs[k[j]]), float(sse[j]))
    return best


def fit_tree(x, y, max_depth, min_leaf, features_per_split, rng):
    tree = RegressionTree()
    d = x.shape[1]

    def grow(idx, depth):
        ys = y[idx]
        node = tree._add(float(ys.mean()), int(idx.size))
        if depth >= max_depth or idx.size < 2 * min_leaf:
            return node
        parent_sse = float(((ys - ys.mean()) ** 2).sum())
        if parent_sse <= 0.0:
            return node
        feats = np.sort(rng.choice(d, size=features_per_split, replace=False))
        split = _best_split(x[idx], ys, feats, min_leaf)
        if split is None or split[2] >= parent_sse:
            return node
        f, thr, _ = split
        go_left = x[idx, f] <= thr
        tree.feature[node] = f
        tree.threshold[node] = float(thr)
        tree.left[node] = grow(idx[go_left], depth + 1)
        tree.right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(y.size), 0)
    return tree


@dataclass
class ForestModel:
    trees: list
    n_trees: int
    max_depth: int
    min_leaf: int
    features_per_split: int
    seed: int

    def predict(self, x):
        x = np.asarray(x, dtype=np.float64)
        total = np.zeros(x.shape[0])
        for t in self.trees:
            total += t.predict(x)
        return total / len(self.trees)

    def to_dict(self):
        return {
            "kind": "random_forest",
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "features_per_split": self.features_per_split,
            "seed": self.seed,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            [RegressionTree.from_dict(t) for t in d["trees"]],
            d["n_trees"],
            d["max_depth"],
            d["min_leaf"],
            d["features_per_split"],
            d["seed"],
        )


def fit_random_forest(ds, n_trees=100, max_depth=8, min_leaf=2, features_per_split=None, seed=0):
    """Bagged CART regression trees with a random feature subset at every split.

    ``features_per_split`` defaults to ``ceil(d / 3)``.
    """
    n, d = ds.features.shape
    if features_per_split is None:
        features_per_split = max(1, math.ceil(d / 3))
    if n_trees < 1 or max_depth < 0 or min_leaf < 1:
        raise ConfigError("need n_trees >= 1, max_depth >= 0, min_leaf >= 1")
    if min_leaf > n:
        raise ConfigError(f"min_leaf={min_leaf} exceeds the {n} training rows")
    if not 1 <= features_per_split <= d:
        raise ConfigError(f"features_per_split must lie in [1, {d}]")
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        boot = rng.integers(0, n, size=n)
        trees.append(fit_tree(ds.features[boot], ds.targets[boot], max_depth, min_leaf, features_per_split, rng))
    return ForestModel(trees, n_trees, max_depth, min_leaf, features_per_split, seed)


def model_from_dict(d):
    kinds = {"linear": LinearModel, "random_forest": ForestModel}
    try:
        return kinds[d["kind"]].from_dict(d)
    except KeyError:
        raise ConfigError(f"unknown model kind {d.get('kind')!r}") from None
