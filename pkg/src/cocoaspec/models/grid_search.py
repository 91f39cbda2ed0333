"""Seeded k-fold cross-validation and exhaustive grid search."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ..errors import FoldError, ValidationError


def kfold_indices(
    n: int, folds: int, seed: int = 0
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffle rows once, then deal them into ``folds`` contiguous parts."""
    if folds < 2:
        raise FoldError("need at least 2 folds")
    if n < folds:
        raise FoldError(f"cannot make {folds} folds from {n} rows")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed])))
    perm = rng.permutation(n)
    parts = np.array_split(perm, folds)
    out = []
    for i in range(folds):
        val = np.sort(parts[i])
        train = np.sort(np.concatenate([parts[j] for j in range(folds) if j != i]))
        out.append((train, val))
    return out


@dataclass
class GridResult:
    best_params: dict
    best_mse: float
    table: list[dict] = field(default_factory=list)
    means: list[dict] = field(default_factory=list)


def grid_search(
    factory,
    param_grid: dict[str, list],
    X: np.ndarray,
    y: np.ndarray,
    folds: int = 5,
    seed: int = 0,
) -> GridResult:
    """Pick the parameter combination with the lowest mean validation MSE.

    Combinations are enumerated in the grid's insertion order (itertools
    product); on a tie the earliest combination wins. ``factory`` must
    return a fresh unfitted estimator for a given parameter dict.
    """
    if not param_grid:
        raise ValidationError("parameter grid must not be empty")
    for name, values in param_grid.items():
        if not isinstance(values, (list, tuple)) or not values:
            raise ValidationError(f"grid entry {name!r} must be a non-empty list")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    splits = kfold_indices(X.shape[0], folds, seed)
    names = list(param_grid)
    result = GridResult(best_params={}, best_mse=np.inf)
    for combo in itertools.product(*(param_grid[n] for n in names)):
        params = dict(zip(names, combo))
        fold_mses = []
        for fold, (train_idx, val_idx) in enumerate(splits):
            model = factory(params)
            model.fit(X[train_idx], y[train_idx])
            pred = model.predict(X[val_idx])
            fold_mse = float(np.mean((pred - y[val_idx]) ** 2))
            fold_mses.append(fold_mse)
            result.table.append({"params": params, "fold": fold, "mse": fold_mse})
        mean_mse = float(np.mean(fold_mses))
        result.means.append({"params": params, "mean_mse": mean_mse})
        if mean_mse < result.best_mse:
            result.best_mse = mean_mse
            result.best_params = params
    return result
