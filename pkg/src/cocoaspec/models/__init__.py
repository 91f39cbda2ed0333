"""Regression model families and supporting machinery."""

from .forest import RandomForestRegressor
from .grid_search import GridResult, grid_search, kfold_indices
from .knn import KNNRegressor
from .network import NetworkRegressor, cnn_layers, mlp_layers
from .store import load_model, save_model
from .svr import SupportVectorRegressor

__all__ = [
    "GridResult",
    "KNNRegressor",
    "NetworkRegressor",
    "RandomForestRegressor",
    "SupportVectorRegressor",
    "cnn_layers",
    "grid_search",
    "kfold_indices",
    "load_model",
    "mlp_layers",
    "save_model",
]
