"""Bootstrap augmentation, train/test assembly, and target normalization.

Each augmented row is the mean of a random subset of one batch's scans.
Randomness is counter-based: realization k of batch b under seed s draws
from Philox seeded with (s, sha256(b), k), so any realization can be
regenerated on its own, in any order, on any machine.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import (
    ConstantTargetError,
    DimensionError,
    IntegrityError,
    ValidationError,
)
from .types import PROPERTIES, BatchRecord, Spectrum

#: Third seed word reserved for the split shuffle so it can never collide
#: with a bootstrap realization index.
_SPLIT_STREAM = 2**62

DEFAULT_HELD_OUT = ("17", "18", "19", "20")


def _batch_key(batch_id: str) -> int:
    digest = hashlib.sha256(batch_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _rng(seed: int, batch_id: str, stream: int) -> np.random.Generator:
    sequence = np.random.SeedSequence([seed, _batch_key(batch_id), stream])
    return np.random.Generator(np.random.Philox(sequence))


@dataclass(frozen=True)
class BootstrapConfig:
    subset_size: int = 50
    realizations: int = 1000
    seed: int = 0
    with_replacement: bool = False

    def __post_init__(self) -> None:
        if self.subset_size < 1:
            raise ValidationError("bootstrap subset_size must be at least 1")
        if self.realizations < 1:
            raise ValidationError("bootstrap realizations must be at least 1")
        if self.seed < 0:
            raise ValidationError("bootstrap seed must be non-negative")


def bootstrap_means(
    spectra: list[Spectrum], config: BootstrapConfig, batch_id: str | None = None
) -> list[Spectrum]:
    """Mean spectra of ``config.realizations`` random subsets of one batch.

    Subsets are drawn without replacement unless configured otherwise, so
    subset_size may not exceed the number of scans in that mode. With
    subset_size equal to the number of scans the subset is the whole batch
    and every realization is the plain mean.
    """
    if not spectra:
        raise ValidationError("cannot bootstrap an empty batch")
    grid = spectra[0].grid
    kind = spectra[0].kind
    for spec in spectra[1:]:
        if spec.grid != grid:
            raise DimensionError("bootstrap inputs must share one grid")
        if spec.kind != kind:
            raise ValidationError("bootstrap inputs must share one kind")
    if batch_id is None:
        batch_id = spectra[0].meta.get("batch_id")
    if not batch_id:
        raise ValidationError("bootstrap needs a batch id for seeding")
    n = len(spectra)
    if not config.with_replacement and config.subset_size > n:
        raise ValidationError(
            f"subset_size {config.subset_size} exceeds the {n} scans available "
            "and replacement is off"
        )
    matrix = np.stack([s.values for s in spectra])
    out = []
    for k in range(config.realizations):
        rng = _rng(config.seed, batch_id, k)
        idx = rng.choice(n, size=config.subset_size, replace=config.with_replacement)
        mean = matrix[idx].mean(axis=0)
        out.append(
            Spectrum(
                grid,
                mean,
                kind=kind,
                meta={
                    "batch_id": batch_id,
                    "scan_index": k,
                    "subset_size": config.subset_size,
                },
            )
        )
    return out


# ---------------------------------------------------------------------------
# feature tables and splits


@dataclass
class FeatureTable:
    """Feature matrix with aligned targets and per-row batch ids."""

    X: np.ndarray
    y: np.ndarray
    batch_ids: np.ndarray
    range_tag: str

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.batch_ids = np.asarray(self.batch_ids, dtype=object)
        if self.X.ndim != 2 or self.y.ndim != 2:
            raise DimensionError("X and y must be 2-d")
        if not (self.X.shape[0] == self.y.shape[0] == self.batch_ids.shape[0]):
            raise DimensionError("X, y and batch_ids must have equal row counts")

    def __len__(self) -> int:
        return int(self.X.shape[0])


@dataclass
class DatasetSplit:
    train: FeatureTable
    test: FeatureTable
    range_tag: str
    held_out_batches: tuple[str, ...]


@dataclass(frozen=True)
class SplitPolicy:
    """Row assignment: held-out batches go entirely to test, the rest are
    shuffled per batch and split by ``test_fraction`` (test size floored)."""

    held_out_batches: tuple[str, ...] = DEFAULT_HELD_OUT
    test_fraction: float = 0.3
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.test_fraction < 1.0):
            raise ValidationError("test_fraction must be in [0, 1)")
        if self.seed < 0:
            raise ValidationError("split seed must be non-negative")


def assemble_dataset(
    realizations: dict[str, list[Spectrum]],
    labels: dict[str, BatchRecord],
    policy: SplitPolicy,
    range_tag: str,
) -> DatasetSplit:
    """Stack realizations into train/test tables under a split policy.

    Row order is deterministic: batches in input order, rows within a
    batch by ascending realization index.
    """
    if not realizations:
        raise ValidationError("no batches to assemble")
    train_rows: list[tuple[np.ndarray, np.ndarray, str]] = []
    test_rows: list[tuple[np.ndarray, np.ndarray, str]] = []
    held = set(policy.held_out_batches)
    width = None
    for batch_id, spectra in realizations.items():
        if batch_id not in labels:
            raise IntegrityError(f"batch {batch_id!r} has no label row")
        if not spectra:
            raise ValidationError(f"batch {batch_id!r} has no realizations")
        targets = labels[batch_id].targets()
        values = np.stack([s.values for s in spectra])
        if width is None:
            width = values.shape[1]
        elif values.shape[1] != width:
            raise DimensionError("all batches must share one band count")
        n = values.shape[0]
        if batch_id in held:
            test_idx = np.arange(n)
            train_idx = np.arange(0)
        else:
            rng = _rng(policy.seed, batch_id, _SPLIT_STREAM)
            perm = rng.permutation(n)
            n_test = int(np.floor(policy.test_fraction * n))
            test_idx = np.sort(perm[:n_test])
            train_idx = np.sort(perm[n_test:])
        for i in train_idx:
            train_rows.append((values[i], targets, batch_id))
        for i in test_idx:
            test_rows.append((values[i], targets, batch_id))
    if not train_rows:
        raise ValidationError("split left no training rows")

    def _table(rows: list[tuple[np.ndarray, np.ndarray, str]]) -> FeatureTable:
        if rows:
            X = np.stack([r[0] for r in rows])
            y = np.stack([r[1] for r in rows])
            ids = np.asarray([r[2] for r in rows], dtype=object)
        else:
            X = np.zeros((0, width))
            y = np.zeros((0, len(PROPERTIES)))
            ids = np.asarray([], dtype=object)
        return FeatureTable(X, y, ids, range_tag)

    return DatasetSplit(
        train=_table(train_rows),
        test=_table(test_rows),
        range_tag=range_tag,
        held_out_batches=tuple(policy.held_out_batches),
    )


class TargetScaler(BaseEstimator, TransformerMixin):
    """Per-column min-max scaler to [0, 1], fit on training targets only.

    Columns seen at fit time define the affine map; a constant column has
    no scale and is rejected. Values outside the fit range map outside
    [0, 1] rather than clipping, so the inverse transform is exact.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.data_min_ = X.min(axis=0)
        self.data_max_ = X.max(axis=0)
        self.scale_ = self.data_max_ - self.data_min_
        if np.any(self.scale_ == 0.0):
            bad = int(np.nonzero(self.scale_ == 0.0)[0][0])
            raise ConstantTargetError(
                f"target column {bad} is constant; min-max scaling undefined"
            )
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "scale_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DimensionError("column count differs from fit")
        return (X - self.data_min_) / self.scale_

    def inverse_transform(self, X):
        check_is_fitted(self, "scale_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DimensionError("column count differs from fit")
        return X * self.scale_ + self.data_min_


def normalize_split(split: DatasetSplit) -> tuple[DatasetSplit, TargetScaler]:
    """Scale targets to [0, 1] using training extrema only."""
    scaler = TargetScaler().fit(split.train.y)
    train = FeatureTable(
        split.train.X, scaler.transform(split.train.y), split.train.batch_ids,
        split.range_tag,
    )
    if len(split.test):
        test_y = scaler.transform(split.test.y)
    else:
        test_y = split.test.y
    test = FeatureTable(split.test.X, test_y, split.test.batch_ids, split.range_tag)
    return (
        DatasetSplit(train, test, split.range_tag, split.held_out_batches),
        scaler,
    )
