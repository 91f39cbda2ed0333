"""Trained-model containers: one npz file with embedded JSON metadata.

The container never uses pickle. Fitted arrays go in as plain npz
entries; everything else (constructor params, family, target property,
spectral range, the target scaler for that property, and a config echo)
lives in a JSON document stored as a zero-dimensional string array under
``__meta__``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import IntegrityError, SchemaError, ValidationError
from .forest import RandomForestRegressor, _Tree
from .knn import KNNRegressor
from .network import Network, NetworkRegressor, mlp_layers
from .svr import SupportVectorRegressor

MODEL_FORMAT = "cocoaspec-model"
MODEL_VERSION = 1

FAMILY_CLASSES = {
    "knn": KNNRegressor,
    "forest": RandomForestRegressor,
    "svr": SupportVectorRegressor,
    "mlp": NetworkRegressor,
    "cnn": NetworkRegressor,
}

_TREE_KEYS = ("feature", "threshold", "left", "right", "value")


def _pack(model) -> tuple[dict[str, np.ndarray], dict]:
    """Arrays and JSON-safe fitted scalars for one fitted model."""
    if isinstance(model, KNNRegressor):
        return {"X": model.X_, "y": model.y_}, {}
    if isinstance(model, RandomForestRegressor):
        arrays: dict[str, np.ndarray] = {}
        for i, tree in enumerate(model.trees_):
            for key, arr in tree.arrays().items():
                arrays[f"t{i}_{key}"] = arr
        return arrays, {"n_trees_fitted": len(model.trees_)}
    if isinstance(model, SupportVectorRegressor):
        arrays = {
            "support_vectors": model.support_vectors_,
            "dual_coef": model.dual_coef_,
            "support": model.support_,
            "alpha": model.alpha_,
            "alpha_star": model.alpha_star_,
        }
        fitted = {
            "intercept": model.intercept_,
            "gamma": model.gamma_,
            "converged": bool(model.converged_),
            "n_iter": int(model.n_iter_),
        }
        return arrays, fitted
    if isinstance(model, NetworkRegressor):
        arrays = {f"p{i}": p for i, p in enumerate(model.params_)}
        fitted = {
            "n_params": len(model.params_),
            "best_epoch": int(model.best_epoch_),
            "n_epochs": int(model.n_epochs_),
        }
        return arrays, fitted
    raise ValidationError(f"cannot serialize model type {type(model).__name__}")


def _unpack(family: str, meta: dict, arrays: dict[str, np.ndarray]):
    cls = FAMILY_CLASSES[family]
    model = cls(**meta["params"])
    fitted = meta["fitted"]
    n_features = int(meta["n_features_in"])
    model.n_features_in_ = n_features
    if isinstance(model, KNNRegressor):
        model.X_ = arrays["X"]
        model.y_ = arrays["y"]
    elif isinstance(model, RandomForestRegressor):
        model.trees_ = []
        for i in range(int(fitted["n_trees_fitted"])):
            model.trees_.append(
                _Tree.from_arrays({k: arrays[f"t{i}_{k}"] for k in _TREE_KEYS})
            )
    elif isinstance(model, SupportVectorRegressor):
        model.support_vectors_ = arrays["support_vectors"]
        model.dual_coef_ = arrays["dual_coef"]
        model.support_ = arrays["support"]
        model.alpha_ = arrays["alpha"]
        model.alpha_star_ = arrays["alpha_star"]
        model.intercept_ = float(fitted["intercept"])
        model.gamma_ = float(fitted["gamma"])
        model.converged_ = bool(fitted["converged"])
        model.n_iter_ = int(fitted["n_iter"])
    elif isinstance(model, NetworkRegressor):
        model.params_ = [arrays[f"p{i}"] for i in range(int(fitted["n_params"]))]
        layers = model.layers if model.layers is not None else mlp_layers()
        model.network_ = Network(
            list(layers) + [{"type": "dense", "width": 1}], n_features
        )
        model.best_epoch_ = int(fitted["best_epoch"])
        model.n_epochs_ = int(fitted["n_epochs"])
        model.history_ = []
    return model


@dataclass
class LoadedModel:
    model: object
    family: str
    property_name: str
    range_tag: str
    scaler_min: float
    scaler_max: float
    meta: dict

    def predict_units(self, X) -> np.ndarray:
        """Predict in the property's original units (inverse of scaling)."""
        norm = self.model.predict(X)
        return norm * (self.scaler_max - self.scaler_min) + self.scaler_min


def save_model(
    path: str | Path,
    model,
    family: str,
    property_name: str,
    range_tag: str,
    scaler_min: float,
    scaler_max: float,
    config_echo: dict | None = None,
) -> Path:
    """Write a fitted model plus its target scaling to an npz container."""
    if family not in FAMILY_CLASSES:
        raise ValidationError(f"unknown model family {family!r}")
    if not isinstance(model, FAMILY_CLASSES[family]):
        raise ValidationError(
            f"model type {type(model).__name__} does not belong to family {family!r}"
        )
    if not hasattr(model, "n_features_in_"):
        raise ValidationError("refusing to save an unfitted model")
    arrays, fitted = _pack(model)
    meta = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "family": family,
        "property": property_name,
        "range": range_tag,
        "params": model.get_params(),
        "fitted": fitted,
        "n_features_in": int(model.n_features_in_),
        "scaler": {"min": float(scaler_min), "max": float(scaler_max)},
        "config_echo": config_echo or {},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        np.savez(fh, __meta__=np.asarray(json.dumps(meta, sort_keys=True)), **arrays)
    return path


def load_model(path: str | Path) -> LoadedModel:
    path = Path(path)
    if not path.is_file():
        raise IntegrityError(f"model file not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        if "__meta__" not in data:
            raise SchemaError(f"{path} is not a model container (no metadata)")
        meta = json.loads(str(data["__meta__"][()]))
        arrays = {k: data[k] for k in data.files if k != "__meta__"}
    if meta.get("format") != MODEL_FORMAT:
        raise SchemaError(f"unknown model format {meta.get('format')!r}")
    if meta.get("version") != MODEL_VERSION:
        raise SchemaError(f"unsupported model version {meta.get('version')!r}")
    family = meta.get("family")
    if family not in FAMILY_CLASSES:
        raise SchemaError(f"unknown model family {family!r}")
    model = _unpack(family, meta, arrays)
    scaler = meta["scaler"]
    return LoadedModel(
        model=model,
        family=family,
        property_name=meta["property"],
        range_tag=meta["range"],
        scaler_min=float(scaler["min"]),
        scaler_max=float(scaler["max"]),
        meta=meta,
    )
