"""Principal component analysis for QC plots, computed with the SVD."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import DimensionError, RankError, ValidationError, ZeroVarianceError


class PrincipalComponents(BaseEstimator, TransformerMixin):
    """Project rows onto the top principal directions of the training data.

    Components come from the SVD of the centered matrix; explained
    variances are the squared singular values over (n_rows - 1). Each
    component's sign is fixed so that its largest-magnitude coordinate is
    positive, which removes the SVD's sign ambiguity.
    """

    def __init__(self, n_components: int = 2):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        n, d = X.shape
        if self.n_components < 1:
            raise ValidationError("n_components must be at least 1")
        if n < 2:
            raise RankError("need at least two rows to define variance")
        if self.n_components > min(n - 1, d):
            raise RankError(
                f"cannot extract {self.n_components} components from "
                f"{n} rows x {d} columns"
            )
        self.mean_ = X.mean(axis=0)
        centered = X - self.mean_
        _, s, vt = np.linalg.svd(centered, full_matrices=False)
        if not np.any(s > 0):
            raise ZeroVarianceError("data has zero variance in every direction")
        k = self.n_components
        components = vt[:k]
        signs = np.sign(components[np.arange(k), np.argmax(np.abs(components), axis=1)])
        signs[signs == 0] = 1.0
        self.components_ = components * signs[:, None]
        self.explained_variance_ = (s[:k] ** 2) / (n - 1)
        total = float((s**2).sum()) / (n - 1)
        self.explained_variance_ratio_ = self.explained_variance_ / total
        self.n_features_in_ = d
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DimensionError("column count differs from fit")
        return (X - self.mean_) @ self.components_.T

    def inverse_transform(self, scores):
        check_is_fitted(self, "components_")
        scores = check_array(scores, dtype=np.float64)
        return scores @ self.components_ + self.mean_
