import numpy as np
import pytest

from cocoaspec.errors import FoldError, ValidationError
from cocoaspec.models import (
    KNNRegressor,
    NetworkRegressor,
    RandomForestRegressor,
    SupportVectorRegressor,
)
from cocoaspec.models.grid_search import GridResult, grid_search, kfold_indices
from cocoaspec.models.store import load_model, save_model


class TestKFold:
    def test_partition_properties(self):
        splits = kfold_indices(23, 5, seed=0)
        assert len(splits) == 5
        all_val = np.concatenate([v for _, v in splits])
        assert sorted(all_val.tolist()) == list(range(23))
        for train, val in splits:
            assert np.intersect1d(train, val).size == 0
            assert len(train) + len(val) == 23
            # sizes differ by at most one row
            assert len(val) in (4, 5)

    def test_deterministic_and_seed_sensitive(self):
        a = kfold_indices(20, 4, seed=1)
        b = kfold_indices(20, 4, seed=1)
        c = kfold_indices(20, 4, seed=2)
        for (ta, va), (tb, vb) in zip(a, b):
            np.testing.assert_array_equal(ta, tb)
            np.testing.assert_array_equal(va, vb)
        assert any(
            not np.array_equal(va, vc) for (_, va), (_, vc) in zip(a, c)
        )

    def test_indices_sorted(self):
        for train, val in kfold_indices(17, 3, seed=5):
            assert np.all(np.diff(train) > 0)
            assert np.all(np.diff(val) > 0)

    def test_errors(self):
        with pytest.raises(FoldError):
            kfold_indices(10, 1)
        with pytest.raises(FoldError):
            kfold_indices(3, 5)


class TestGridSearch:
    def make_data(self, seed=0, n=60):
        rng = np.random.default_rng(seed)
        X = rng.uniform(-1.0, 1.0, (n, 2))
        y = X[:, 0] ** 2 + 0.3 * rng.normal(size=n)
        return X, y

    def test_selects_reasonable_k(self):
        X, y = self.make_data()
        result = grid_search(
            lambda p: KNNRegressor(**p),
            {"n_neighbors": [1, 5, 40]},
            X,
            y,
            folds=4,
            seed=0,
        )
        # with noise, k=5 beats both memorizing (k=1) and the global mean
        assert result.best_params == {"n_neighbors": 5}
        assert result.best_mse == min(m["mean_mse"] for m in result.means)

    def test_table_has_one_row_per_combo_and_fold(self):
        X, y = self.make_data()
        result = grid_search(
            lambda p: KNNRegressor(**p),
            {"n_neighbors": [1, 3], "metric": ["euclidean", "manhattan"]},
            X,
            y,
            folds=3,
            seed=0,
        )
        assert len(result.table) == 4 * 3
        assert len(result.means) == 4
        folds_seen = {row["fold"] for row in result.table}
        assert folds_seen == {0, 1, 2}

    def test_tie_goes_to_earliest_combination(self):
        # one-dimensional data: euclidean and manhattan distances are equal,
        # so both metrics give identical predictions and tie exactly
        rng = np.random.default_rng(3)
        X = rng.uniform(0.0, 1.0, (30, 1))
        y = rng.normal(size=30)
        result = grid_search(
            lambda p: KNNRegressor(n_neighbors=3, **p),
            {"metric": ["euclidean", "manhattan"]},
            X,
            y,
            folds=3,
            seed=0,
        )
        means = [m["mean_mse"] for m in result.means]
        assert means[0] == means[1]
        assert result.best_params == {"metric": "euclidean"}

    def test_enumeration_order_is_insertion_order(self):
        X, y = self.make_data(n=12)
        result = grid_search(
            lambda p: KNNRegressor(**p),
            {"n_neighbors": [1, 2], "metric": ["euclidean", "manhattan"]},
            X,
            y,
            folds=2,
            seed=0,
        )
        combos = [tuple(m["params"].items()) for m in result.means]
        assert combos == [
            (("n_neighbors", 1), ("metric", "euclidean")),
            (("n_neighbors", 1), ("metric", "manhattan")),
            (("n_neighbors", 2), ("metric", "euclidean")),
            (("n_neighbors", 2), ("metric", "manhattan")),
        ]

    def test_empty_grid_rejected(self):
        X, y = self.make_data(n=10)
        with pytest.raises(ValidationError):
            grid_search(lambda p: KNNRegressor(**p), {}, X, y)
        with pytest.raises(ValidationError):
            grid_search(lambda p: KNNRegressor(**p), {"n_neighbors": []}, X, y)

    def test_deterministic(self):
        X, y = self.make_data()
        kwargs = dict(folds=3, seed=7)
        a = grid_search(lambda p: KNNRegressor(**p), {"n_neighbors": [1, 3]}, X, y, **kwargs)
        b = grid_search(lambda p: KNNRegressor(**p), {"n_neighbors": [1, 3]}, X, y, **kwargs)
        assert a.best_params == b.best_params
        assert a.table == b.table


class TestModelStore:
    def fitted_models(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(-1.0, 1.0, (40, 6))
        y = X[:, 0] * 0.5 + 0.2
        return X, y, {
            "knn": KNNRegressor(n_neighbors=3).fit(X, y),
            "forest": RandomForestRegressor(n_trees=4, seed=1).fit(X, y),
            "svr": SupportVectorRegressor(kernel="rbf", C=10.0).fit(X, y),
            "mlp": NetworkRegressor(max_epochs=5, seed=0).fit(X, y),
            "cnn": NetworkRegressor(
                layers=[
                    {"type": "conv", "channels": 2, "kernel": 3},
                    {"type": "relu"},
                    {"type": "pool", "width": 2},
                ],
                max_epochs=5,
                seed=0,
            ).fit(X, y),
        }

    def test_round_trip_predictions_bit_identical(self, tmp_path):
        X, y, models = self.fitted_models()
        for family, model in models.items():
            path = save_model(
                tmp_path / f"{family}.npz",
                model,
                family,
                "moisture",
                "VIS",
                scaler_min=3.0,
                scaler_max=7.0,
            )
            loaded = load_model(path)
            np.testing.assert_array_equal(loaded.model.predict(X), model.predict(X))
            assert loaded.family == family
            assert loaded.property_name == "moisture"
            assert loaded.range_tag == "VIS"

    def test_predict_units_inverts_scaling(self, tmp_path):
        X, y, models = self.fitted_models()
        path = save_model(
            tmp_path / "m.npz", models["knn"], "knn", "moisture", "VIS", 3.0, 7.0
        )
        loaded = load_model(path)
        norm = loaded.model.predict(X)
        np.testing.assert_allclose(loaded.predict_units(X), norm * 4.0 + 3.0)

    def test_params_echoed(self, tmp_path):
        X, y, models = self.fitted_models()
        path = save_model(
            tmp_path / "m.npz", models["forest"], "forest", "cadmium", "NIR", 0.0, 1.0
        )
        loaded = load_model(path)
        assert loaded.meta["params"]["n_trees"] == 4
        assert loaded.model.get_params()["n_trees"] == 4

    def test_config_echo_preserved(self, tmp_path):
        X, y, models = self.fitted_models()
        path = save_model(
            tmp_path / "m.npz", models["knn"], "knn", "moisture", "VIS", 0.0, 1.0,
            config_echo={"seeds": {"train": 505}},
        )
        assert load_model(path).meta["config_echo"] == {"seeds": {"train": 505}}

    def test_unfitted_model_refused(self, tmp_path):
        with pytest.raises(ValidationError):
            save_model(
                tmp_path / "m.npz", KNNRegressor(), "knn", "moisture", "VIS", 0.0, 1.0
            )

    def test_family_mismatch_refused(self, tmp_path):
        X, y, models = self.fitted_models()
        with pytest.raises(ValidationError):
            save_model(
                tmp_path / "m.npz", models["knn"], "forest", "moisture", "VIS", 0.0, 1.0
            )

    def test_not_a_container_rejected(self, tmp_path):
        path = tmp_path / "junk.npz"
        np.savez(path, a=np.ones(3))
        from cocoaspec.errors import SchemaError

        with pytest.raises(SchemaError):
            load_model(path)

    def test_missing_file_rejected(self, tmp_path):
        from cocoaspec.errors import IntegrityError

        with pytest.raises(IntegrityError):
            load_model(tmp_path / "absent.npz")

    def test_no_pickle_in_container(self, tmp_path):
        X, y, models = self.fitted_models()
        for family, model in models.items():
            path = save_model(
                tmp_path / f"{family}.npz", model, family, "moisture", "VIS", 0.0, 1.0
            )
            # loading with allow_pickle=False must succeed for every entry
            with np.load(path, allow_pickle=False) as data:
                for key in data.files:
                    _ = data[key]
