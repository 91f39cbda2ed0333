"""k-nearest-neighbour regression with tie-inclusive neighbourhoods."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..errors import ValidationError

_METRICS = ("euclidean", "manhattan", "cosine")


class KNNRegressor(BaseEstimator, RegressorMixin):
    """Predict the mean target of the k nearest training points.

    If several training points sit exactly at the k-th distance, all of
    them join the neighbourhood, so the prediction does not depend on how
    equidistant points happen to be ordered. Neighbour targets are summed
    in sorted order, which makes predictions bit-identical under any
    permutation of the training set.
    """

    def __init__(self, n_neighbors: int = 5, metric: str = "euclidean"):
        self.n_neighbors = n_neighbors
        self.metric = metric

    def fit(self, X, y):
        if self.n_neighbors < 1:
            raise ValidationError("n_neighbors must be at least 1")
        if self.metric not in _METRICS:
            raise ValidationError(f"unknown metric {self.metric!r}")
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if self.n_neighbors > X.shape[0]:
            raise ValidationError(
                f"n_neighbors={self.n_neighbors} exceeds {X.shape[0]} training rows"
            )
        self.X_ = X
        self.y_ = y.astype(np.float64)
        self.n_features_in_ = X.shape[1]
        return self

    def _distances(self, X: np.ndarray) -> np.ndarray:
        train = self.X_
        if self.metric == "euclidean":
            sq = (
                np.sum(X**2, axis=1)[:, None]
                + np.sum(train**2, axis=1)[None, :]
                - 2.0 * (X @ train.T)
            )
            return np.sqrt(np.maximum(sq, 0.0))
        if self.metric == "cosine":
            xn = np.linalg.norm(X, axis=1)
            tn = np.linalg.norm(train, axis=1)
            if np.any(xn == 0.0) or np.any(tn == 0.0):
                raise ValidationError("cosine metric undefined for zero rows")
            return 1.0 - (X / xn[:, None]) @ (train / tn[:, None]).T
        out = np.empty((X.shape[0], train.shape[0]))
        for i, row in enumerate(X):
            out[i] = np.sum(np.abs(train - row), axis=1)
        return out

    def predict(self, X):
        check_is_fitted(self, "X_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError("feature count differs from fit")
        dists = self._distances(X)
        k = self.n_neighbors
        kth = np.partition(dists, k - 1, axis=1)[:, k - 1]
        preds = np.empty(X.shape[0])
        for i in range(X.shape[0]):
            neighbors = dists[i] <= kth[i]
            targets = np.sort(self.y_[neighbors])
            preds[i] = targets.sum() / targets.size
        return preds
