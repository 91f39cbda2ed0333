import warnings

import numpy as np
import pytest

from cocoaspec.errors import ValidationError
from cocoaspec.models import SupportVectorRegressor


class TestLinearKernel:
    def test_recovers_linear_function(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(-1.0, 1.0, (30, 2))
        y = 2.0 * X[:, 0] - 1.0 * X[:, 1] + 0.5
        model = SupportVectorRegressor(
            kernel="linear", C=1e3, epsilon=1e-3, tol=1e-5
        ).fit(X, y)
        assert model.converged_
        mse = float(np.mean((model.predict(X) - y) ** 2))
        assert mse < 1e-5

    def test_matches_least_squares_oracle(self):
        # with a huge C and tiny epsilon the SVR solution approaches the
        # interpolating linear fit; compare against lstsq on test points
        rng = np.random.default_rng(1)
        X = rng.uniform(-1.0, 1.0, (40, 3))
        w = np.array([1.5, -2.0, 0.7])
        y = X @ w + 0.3
        model = SupportVectorRegressor(
            kernel="linear", C=1e4, epsilon=1e-3, tol=1e-6
        ).fit(X, y)
        assert model.converged_
        A = np.column_stack([X, np.ones(len(X))])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        Xq = rng.uniform(-1.0, 1.0, (20, 3))
        oracle = Xq @ coef[:3] + coef[3]
        mse = float(np.mean((model.predict(Xq) - oracle) ** 2))
        assert mse < 1e-5


class TestRbfKernel:
    def test_fits_smooth_curve(self):
        X = np.linspace(-2.0, 2.0, 60)[:, None]
        y = np.sin(2.0 * X[:, 0])
        model = SupportVectorRegressor(
            kernel="rbf", C=100.0, epsilon=0.01, gamma=1.0, tol=1e-5
        ).fit(X, y)
        residual = np.abs(model.predict(X) - y)
        # everything inside the tube plus the stopping slack
        assert residual.max() < 0.05

    def test_gamma_scale(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(20, 4))
        model = SupportVectorRegressor(gamma="scale").fit(X, rng.normal(size=20))
        assert model.gamma_ == pytest.approx(1.0 / (4 * X.var()))

    def test_prediction_far_away_returns_bias(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(15, 2))
        y = rng.normal(size=15)
        model = SupportVectorRegressor(kernel="rbf", gamma=1.0).fit(X, y)
        far = model.predict(np.full((1, 2), 1e3))[0]
        assert far == pytest.approx(model.intercept_, abs=1e-9)


class TestDualSolution:
    def test_box_and_balance_constraints(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(40, 2))
        y = rng.normal(size=40)
        model = SupportVectorRegressor(C=5.0, epsilon=0.05, tol=1e-5).fit(X, y)
        res = model.kkt_residuals()
        assert res["box_violation"] <= 1e-12
        assert res["equality_residual"] <= 1e-9

    def test_alpha_pairs_not_both_active(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        model = SupportVectorRegressor(C=2.0, epsilon=0.1, tol=1e-6).fit(X, y)
        both = np.minimum(model.alpha_, model.alpha_star_)
        assert both.max() <= 1e-9

    def test_points_outside_tube_are_support_vectors(self):
        rng = np.random.default_rng(6)
        X = rng.uniform(-1.0, 1.0, (40, 2))
        y = X[:, 0] + 0.2 * rng.normal(size=40)
        eps = 0.05
        model = SupportVectorRegressor(
            kernel="rbf", C=50.0, epsilon=eps, gamma=1.0, tol=1e-6
        ).fit(X, y)
        pred = model.predict(X)
        outside = np.abs(pred - y) > eps + 1e-3
        assert set(np.nonzero(outside)[0]).issubset(set(model.support_))

    def test_constant_target_immediate_bias(self):
        X = np.random.default_rng(7).normal(size=(10, 2))
        y = np.full(10, 3.25)
        model = SupportVectorRegressor(epsilon=0.1).fit(X, y)
        assert model.n_iter_ == 0
        assert model.converged_
        assert model.intercept_ == pytest.approx(3.25)
        assert model.support_.size == 0
        np.testing.assert_allclose(model.predict(X), 3.25)

    def test_epsilon_tube_ignores_small_noise(self):
        rng = np.random.default_rng(8)
        X = np.linspace(0.0, 1.0, 25)[:, None]
        clean = 2.0 * X[:, 0]
        noisy = clean + rng.uniform(-0.04, 0.04, 25)
        model = SupportVectorRegressor(
            kernel="linear", C=100.0, epsilon=0.1, tol=1e-6
        ).fit(X, noisy)
        # a wide tube swallows the noise; very few active multipliers
        assert model.support_.size <= 4


class TestConvergenceHandling:
    def test_non_convergence_warns_and_flags(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(50, 3))
        y = rng.normal(size=50)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            model = SupportVectorRegressor(
                C=100.0, epsilon=1e-6, tol=1e-12, max_iter=5
            ).fit(X, y)
        assert not model.converged_
        assert model.n_iter_ == 5
        assert any(issubclass(w.category, RuntimeWarning) for w in caught)
        # the model still predicts
        assert model.predict(X).shape == (50,)

    def test_converged_flag_true_on_easy_problem(self):
        X = np.linspace(0.0, 1.0, 10)[:, None]
        model = SupportVectorRegressor(kernel="linear", tol=1e-4).fit(X, X[:, 0])
        assert model.converged_ and model.n_iter_ < 200_000


class TestValidation:
    def test_parameter_checks(self):
        X, y = np.eye(3), np.arange(3.0)
        with pytest.raises(ValidationError):
            SupportVectorRegressor(kernel="poly").fit(X, y)
        with pytest.raises(ValidationError):
            SupportVectorRegressor(C=0.0).fit(X, y)
        with pytest.raises(ValidationError):
            SupportVectorRegressor(epsilon=-0.1).fit(X, y)
        with pytest.raises(ValidationError):
            SupportVectorRegressor(tol=0.0).fit(X, y)
        with pytest.raises(ValidationError):
            SupportVectorRegressor(gamma=-1.0).fit(X, y)

    def test_feature_count_checked(self):
        model = SupportVectorRegressor().fit(np.eye(3), np.arange(3.0))
        with pytest.raises(ValidationError):
            model.predict(np.ones((1, 4)))

    def test_get_params(self):
        model = SupportVectorRegressor(kernel="linear", C=2.0, epsilon=0.2)
        params = model.get_params()
        assert params["kernel"] == "linear"
        assert params["C"] == 2.0
        clone = SupportVectorRegressor(**params)
        assert clone.get_params() == params

    def test_deterministic(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(25, 2))
        y = rng.normal(size=25)
        a = SupportVectorRegressor(C=3.0).fit(X, y).predict(X)
        b = SupportVectorRegressor(C=3.0).fit(X, y).predict(X)
        np.testing.assert_array_equal(a, b)
