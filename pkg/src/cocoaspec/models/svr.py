"""Epsilon-insensitive support vector regression trained with SMO.

The dual problem over 2n box-constrained variables (one pair per training
row) is solved by repeatedly picking the maximal violating pair and moving
the two variables along the equality constraint. The stopping gap m - M
is the usual KKT violation measure, and the bias falls out of the final
gap as (m + M) / 2.
"""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..errors import ValidationError

_KERNELS = ("rbf", "linear")

#: Curvature floor for degenerate pairs, as in standard SMO solvers.
_TAU = 1e-12


class SupportVectorRegressor(BaseEstimator, RegressorMixin):
    """SVR with an epsilon tube, RBF or linear kernel, and box [0, C]."""

    def __init__(
        self,
        kernel: str = "rbf",
        C: float = 1.0,
        epsilon: float = 0.1,
        gamma: float | str = "scale",
        tol: float = 1e-3,
        max_iter: int = 200_000,
    ):
        self.kernel = kernel
        self.C = C
        self.epsilon = epsilon
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def _gamma_value(self, X: np.ndarray) -> float:
        if self.gamma == "scale":
            var = float(X.var())
            return 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        if isinstance(self.gamma, (int, float)) and self.gamma > 0:
            return float(self.gamma)
        raise ValidationError("gamma must be positive or 'scale'")

    def _kernel_matrix(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        if self.kernel == "linear":
            return A @ B.T
        sq = (
            np.sum(A**2, axis=1)[:, None]
            + np.sum(B**2, axis=1)[None, :]
            - 2.0 * (A @ B.T)
        )
        return np.exp(-self.gamma_ * np.maximum(sq, 0.0))

    def fit(self, X, y):
        if self.kernel not in _KERNELS:
            raise ValidationError(f"unknown kernel {self.kernel!r}")
        if self.C <= 0:
            raise ValidationError("C must be positive")
        if self.epsilon < 0:
            raise ValidationError("epsilon must be non-negative")
        if self.tol <= 0:
            raise ValidationError("tol must be positive")
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        self.gamma_ = self._gamma_value(X)
        n = X.shape[0]
        if n <= 3000:
            K = self._kernel_matrix(X, X)
            diag = np.ascontiguousarray(np.diag(K))

            def col(i: int) -> np.ndarray:
                return K[:, i]

        else:
            # full kernel would not fit in memory; cache recent columns
            if self.kernel == "linear":
                diag = np.sum(X**2, axis=1)
            else:
                diag = np.ones(n)
            cache: dict[int, np.ndarray] = {}

            def col(i: int) -> np.ndarray:
                hit = cache.get(i)
                if hit is None:
                    hit = self._kernel_matrix(X, X[i : i + 1]).ravel()
                    if len(cache) >= 1024:
                        cache.pop(next(iter(cache)))
                    cache[i] = hit
                return hit

        C, eps = float(self.C), float(self.epsilon)
        # beta stacks [alpha; alpha*]; sign +1 for alpha, -1 for alpha*.
        beta = np.zeros(2 * n)
        z = np.concatenate([np.ones(n), -np.ones(n)])
        p = np.concatenate([eps - y, eps + y])
        point = np.concatenate([np.arange(n), np.arange(n)])
        # o[i] = sum_j (alpha_j - alpha*_j) K_ij, maintained incrementally.
        o = np.zeros(n)

        it = 0
        m_val = M_val = 0.0
        while True:
            G = z * o[point] + p
            viol = -z * G
            in_up = np.where(z > 0, beta < C, beta > 0)
            in_low = np.where(z > 0, beta > 0, beta < C)
            up_viol = np.where(in_up, viol, -np.inf)
            low_viol = np.where(in_low, viol, np.inf)
            u = int(np.argmax(up_viol))
            v = int(np.argmin(low_viol))
            m_val, M_val = float(up_viol[u]), float(low_viol[v])
            if m_val - M_val <= self.tol or it >= self.max_iter:
                break
            i_pt, j_pt = int(point[u]), int(point[v])
            col_i, col_j = col(i_pt), col(j_pt)
            eta = max(diag[i_pt] + diag[j_pt] - 2.0 * col_j[i_pt], _TAU)
            t = (m_val - M_val) / eta
            # keep both variables inside [0, C]
            if z[u] > 0:
                t = min(t, C - beta[u])
            else:
                t = min(t, beta[u])
            if z[v] > 0:
                t = min(t, beta[v])
            else:
                t = min(t, C - beta[v])
            beta[u] += z[u] * t
            beta[v] -= z[v] * t
            np.clip(beta, 0.0, C, out=beta)
            o += t * (col_i - col_j)
            it += 1

        self.converged_ = it < self.max_iter
        if not self.converged_:
            warnings.warn(
                f"SVR stopped at max_iter={self.max_iter} with KKT gap "
                f"{m_val - M_val:.3g} > tol={self.tol:.3g}",
                RuntimeWarning,
                stacklevel=2,
            )
        self.n_iter_ = it
        coef = beta[:n] - beta[n:]
        support = np.nonzero(coef != 0.0)[0]
        self.dual_coef_ = coef[support]
        self.support_ = support
        self.support_vectors_ = X[support]
        self.intercept_ = float((m_val + M_val) / 2.0)
        self.alpha_ = beta[:n]
        self.alpha_star_ = beta[n:]
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "dual_coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError("feature count differs from fit")
        if self.support_vectors_.shape[0] == 0:
            return np.full(X.shape[0], self.intercept_)
        K = self._kernel_matrix(X, self.support_vectors_)
        return K @ self.dual_coef_ + self.intercept_

    def kkt_residuals(self) -> dict[str, float]:
        """Diagnostics from training: final gap components and box slack."""
        check_is_fitted(self, "dual_coef_")
        box_violation = float(
            max(
                np.maximum(-self.alpha_, 0.0).max(initial=0.0),
                np.maximum(self.alpha_ - self.C, 0.0).max(initial=0.0),
                np.maximum(-self.alpha_star_, 0.0).max(initial=0.0),
                np.maximum(self.alpha_star_ - self.C, 0.0).max(initial=0.0),
            )
        )
        balance = float(abs(self.alpha_.sum() - self.alpha_star_.sum()))
        return {"box_violation": box_violation, "equality_residual": balance}
