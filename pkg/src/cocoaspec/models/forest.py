"""Random forest regression built on variance-minimizing CART trees."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..errors import ValidationError


class _Tree:
    """Flat-array binary regression tree.

    Internal nodes store a (feature, threshold) test; rows with
    feature value <= threshold go left. Leaves store the mean target.
    """

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self) -> None:
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def add_leaf(self, value: float) -> int:
        return self._add(-1, np.nan, -1, -1, value)

    def add_node(self, feature: int, threshold: float) -> int:
        return self._add(feature, threshold, -1, -1, np.nan)

    def _add(self, feature: int, threshold: float, left: int, right: int, value: float) -> int:
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(left)
        self.right.append(right)
        self.value.append(value)
        return len(self.feature) - 1

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "feature": np.asarray(self.feature, dtype=np.int64),
            "threshold": np.asarray(self.threshold, dtype=np.float64),
            "left": np.asarray(self.left, dtype=np.int64),
            "right": np.asarray(self.right, dtype=np.int64),
            "value": np.asarray(self.value, dtype=np.float64),
        }

    @staticmethod
    def from_arrays(arrays: dict[str, np.ndarray]) -> "_Tree":
        tree = _Tree()
        tree.feature = [int(v) for v in arrays["feature"]]
        tree.threshold = [float(v) for v in arrays["threshold"]]
        tree.left = [int(v) for v in arrays["left"]]
        tree.right = [int(v) for v in arrays["right"]]
        tree.value = [float(v) for v in arrays["value"]]
        return tree

    def predict(self, X: np.ndarray) -> np.ndarray:
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        value = np.asarray(self.value)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = feature[node] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            cur = node[idx]
            go_left = X[idx, feature[cur]] <= threshold[cur]
            node[idx] = np.where(go_left, left[cur], right[cur])
            active = feature[node] >= 0
        return value[node]


def _best_split(
    X: np.ndarray, y: np.ndarray, features: np.ndarray, min_leaf: int
) -> tuple[int, float] | None:
    """Split minimizing the summed squared error of the two children.

    Candidate thresholds are midpoints between consecutive distinct
    feature values. Returns None when no split leaves both children with
    at least min_leaf rows.
    """
    n = y.size
    best_score = np.inf
    best: tuple[int, float] | None = None
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        total, total_sq = csum[-1], csq[-1]
        sizes = np.arange(1, n)
        valid = (xs[1:] > xs[:-1]) & (sizes >= min_leaf) & (n - sizes >= min_leaf)
        if not valid.any():
            continue
        left_sum = csum[:-1]
        left_sq = csq[:-1]
        sse_left = left_sq - left_sum**2 / sizes
        sse_right = (total_sq - left_sq) - (total - left_sum) ** 2 / (n - sizes)
        score = np.where(valid, sse_left + sse_right, np.inf)
        i = int(np.argmin(score))
        if score[i] < best_score:
            best_score = float(score[i])
            best = (int(f), float((xs[i] + xs[i + 1]) / 2.0))
    return best


def _grow(
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    max_depth: int | None,
    min_leaf: int,
    n_features_split: int,
) -> _Tree:
    tree = _Tree()

    def build(rows: np.ndarray, depth: int) -> int:
        ys = y[rows]
        if (
            (max_depth is not None and depth >= max_depth)
            or rows.size < 2 * min_leaf
            or np.all(ys == ys[0])
        ):
            return tree.add_leaf(float(ys.mean()))
        features = np.sort(
            rng.choice(X.shape[1], size=n_features_split, replace=False)
        )
        split = _best_split(X[rows], ys, features, min_leaf)
        if split is None:
            return tree.add_leaf(float(ys.mean()))
        feature, threshold = split
        node = tree.add_node(feature, threshold)
        go_left = X[rows, feature] <= threshold
        tree.left[node] = build(rows[go_left], depth + 1)
        tree.right[node] = build(rows[~go_left], depth + 1)
        return node

    build(np.arange(X.shape[0]), 0)
    return tree


class RandomForestRegressor(BaseEstimator, RegressorMixin):
    """Bagged CART trees averaged together.

    Tree t draws its randomness from a stream keyed by (seed, t), so the
    first trees of a larger forest are identical to a smaller forest with
    the same seed; growing n_trees only appends trees.
    """

    def __init__(
        self,
        n_trees: int = 100,
        max_depth: int | None = None,
        min_samples_leaf: int = 1,
        max_features: int | str = "sqrt",
        bag_fraction: float = 1.0,
        seed: int = 0,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bag_fraction = bag_fraction
        self.seed = seed

    def _n_features_split(self, d: int) -> int:
        if self.max_features == "sqrt":
            return int(np.ceil(np.sqrt(d)))
        if self.max_features == "all":
            return d
        if isinstance(self.max_features, (int, np.integer)) and not isinstance(
            self.max_features, bool
        ):
            if 1 <= int(self.max_features) <= d:
                return int(self.max_features)
        raise ValidationError(
            f"max_features must be 'sqrt', 'all' or an int in [1, {d}]"
        )

    def fit(self, X, y):
        if self.n_trees < 1:
            raise ValidationError("n_trees must be at least 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValidationError("max_depth must be at least 1 when set")
        if self.min_samples_leaf < 1:
            raise ValidationError("min_samples_leaf must be at least 1")
        if not (0.0 < self.bag_fraction <= 1.0):
            raise ValidationError("bag_fraction must be in (0, 1]")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        n, d = X.shape
        k = self._n_features_split(d)
        bag_size = max(1, int(np.floor(self.bag_fraction * n)))
        self.trees_ = []
        for t in range(self.n_trees):
            rng = np.random.Generator(
                np.random.Philox(np.random.SeedSequence([self.seed, t]))
            )
            rows = rng.choice(n, size=bag_size, replace=True)
            tree = _grow(
                X[rows], y[rows], rng, self.max_depth, self.min_samples_leaf, k
            )
            self.trees_.append(tree)
        self.n_features_in_ = d
        return self

    def predict(self, X):
        check_is_fitted(self, "trees_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError("feature count differs from fit")
        total = np.zeros(X.shape[0])
        for tree in self.trees_:
            total += tree.predict(X)
        return total / len(self.trees_)
