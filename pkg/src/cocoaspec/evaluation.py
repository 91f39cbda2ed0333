"""Model evaluation: metrics, the per-subset report, and region ranking.

Metrics are computed on normalized targets, with a de-normalized MSE
column alongside (normalized MSE times the squared target span, exactly
the MSE in original units). Because the test pool mixes realizations of
training-era batches with entirely held-out shipments, every figure is
reported per subset: ``all`` rows, ``within_batch`` rows (unseen
realizations of batches the model trained on), and ``held_out_batches``
rows (shipments never seen at all).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, DomainError, IntegrityError, ValidationError
from .io import fmt9
from .resampling import DatasetSplit, TargetScaler
from .types import PROPERTIES, PROPERTY_UNITS, RANGE_TAGS, BatchRecord

FAMILY_ORDER = ("knn", "forest", "svr", "mlp", "cnn")
GROUP_OF = {"knn": "ml", "forest": "ml", "svr": "ml", "mlp": "dl", "cnn": "dl"}

SUBSET_ALL = "all"
SUBSET_WITHIN = "within_batch"
SUBSET_HELD_OUT = "held_out_batches"
SUBSETS = (SUBSET_ALL, SUBSET_WITHIN, SUBSET_HELD_OUT)


def _check_pair(y_true, y_pred) -> tuple[np.ndarray, np.ndarray]:
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    if y_true.size != y_pred.size:
        raise DimensionError("y_true and y_pred must have equal length")
    if y_true.size == 0:
        raise DimensionError("metrics need at least one row")
    if not (np.all(np.isfinite(y_true)) and np.all(np.isfinite(y_pred))):
        raise ValidationError("metrics need finite inputs")
    return y_true, y_pred


def mse(y_true, y_pred) -> float:
    y_true, y_pred = _check_pair(y_true, y_pred)
    return float(np.mean((y_true - y_pred) ** 2))


def r_squared(y_true, y_pred) -> float:
    """Coefficient of determination; negative when worse than the mean.

    Undefined (raises) when y_true is constant, since the total sum of
    squares is zero.
    """
    y_true, y_pred = _check_pair(y_true, y_pred)
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        raise DomainError("r_squared undefined for constant true values")
    ss_res = float(np.sum((y_true - y_pred) ** 2))
    return 1.0 - ss_res / ss_tot


@dataclass
class EvalRow:
    family: str
    group: str
    range_tag: str
    property_name: str
    subset: str
    n_rows: int
    r2: float | None
    mse_norm: float | None
    mse_units: float | None
    flags: list[str] = field(default_factory=list)


@dataclass
class EvalReport:
    rows: list[EvalRow]
    held_out_batches: tuple[str, ...]

    _COLUMNS = (
        "family",
        "group",
        "range",
        "property",
        "subset",
        "n_rows",
        "r2",
        "mse_norm",
        "mse_units",
        "flags",
    )

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self._COLUMNS)
            for row in self.rows:
                writer.writerow(
                    [
                        row.family,
                        row.group,
                        row.range_tag,
                        row.property_name,
                        row.subset,
                        row.n_rows,
                        "" if row.r2 is None else f"{row.r2:.6f}",
                        "" if row.mse_norm is None else fmt9(row.mse_norm),
                        "" if row.mse_units is None else fmt9(row.mse_units),
                        ";".join(row.flags),
                    ]
                )

    def render_text(self) -> str:
        lines = []
        header = (
            f"{'family':<8}{'range':<6}{'property':<14}{'subset':<18}"
            f"{'n':>6}  {'R2':>9}  {'MSE(norm)':>11}  {'MSE(units)':>11}  flags"
        )
        for subset in SUBSETS:
            block = [r for r in self.rows if r.subset == subset]
            if not block:
                continue
            lines.append(f"== subset: {subset} ==")
            lines.append(header)
            for row in block:
                r2 = "-" if row.r2 is None else f"{row.r2:9.4f}"
                m_norm = "-" if row.mse_norm is None else f"{row.mse_norm:11.5g}"
                m_unit = "-" if row.mse_units is None else f"{row.mse_units:11.5g}"
                lines.append(
                    f"{row.family:<8}{row.range_tag:<6}{row.property_name:<14}"
                    f"{row.subset:<18}{row.n_rows:>6}  {r2:>9}  {m_norm:>11}  "
                    f"{m_unit:>11}  {';'.join(row.flags)}"
                )
            lines.append("")
        return "\n".join(lines)


def _subset_masks(split: DatasetSplit) -> dict[str, np.ndarray]:
    held = set(split.held_out_batches)
    in_held = np.asarray([b in held for b in split.test.batch_ids], dtype=bool)
    return {
        SUBSET_ALL: np.ones(len(split.test), dtype=bool),
        SUBSET_WITHIN: ~in_held,
        SUBSET_HELD_OUT: in_held,
    }


def evaluate_suite(
    predictors: dict[tuple[str, str, str], object],
    splits: dict[str, DatasetSplit],
    scalers: dict[str, TargetScaler],
    expected_families: tuple[str, ...] | None = None,
) -> EvalReport:
    """Score every (family, range, property) predictor on the test rows.

    ``predictors`` map (family, range, property) to a model fitted on
    normalized targets. Families listed in ``expected_families`` but
    absent from the predictor map produce explicit gap rows rather than
    disappearing from the report.
    """
    if not splits:
        raise ValidationError("no splits to evaluate")
    held_out: tuple[str, ...] = ()
    for split in splits.values():
        held_out = split.held_out_batches
    families = [f for f in FAMILY_ORDER if any(k[0] == f for k in predictors)]
    if expected_families:
        for fam in expected_families:
            if fam not in GROUP_OF:
                raise ValidationError(f"unknown family {fam!r}")
        families = [f for f in FAMILY_ORDER if f in set(families) | set(expected_families)]
    ranges = [t for t in RANGE_TAGS if t in splits]
    rows: list[EvalRow] = []
    cache: dict[tuple[str, str, str], np.ndarray] = {}
    for family in families:
        for range_tag in ranges:
            split = splits[range_tag]
            masks = _subset_masks(split)
            scale = scalers[range_tag].scale_
            for p_idx, prop in enumerate(PROPERTIES):
                key = (family, range_tag, prop)
                model = predictors.get(key)
                if model is None:
                    rows.append(
                        EvalRow(
                            family,
                            GROUP_OF[family],
                            range_tag,
                            prop,
                            SUBSET_ALL,
                            0,
                            None,
                            None,
                            None,
                            ["not_available"],
                        )
                    )
                    continue
                if key not in cache:
                    cache[key] = np.asarray(model.predict(split.test.X))
                pred = cache[key]
                y_true = split.test.y[:, p_idx]
                for subset in SUBSETS:
                    mask = masks[subset]
                    n = int(mask.sum())
                    if n == 0:
                        continue
                    flags: list[str] = []
                    m_norm = mse(y_true[mask], pred[mask])
                    m_units = m_norm * float(scale[p_idx]) ** 2
                    if float(np.var(y_true[mask])) == 0.0:
                        r2 = None
                        flags.append("constant_targets")
                    else:
                        r2 = r_squared(y_true[mask], pred[mask])
                    if m_norm == 0.0 and n >= 2:
                        flags.append("perfect_fit_check_leakage")
                    rows.append(
                        EvalRow(
                            family,
                            GROUP_OF[family],
                            range_tag,
                            prop,
                            subset,
                            n,
                            r2,
                            m_norm,
                            m_units,
                            flags,
                        )
                    )
    _mark_best(rows)
    return EvalReport(rows=rows, held_out_batches=held_out)


def _mark_best(rows: list[EvalRow]) -> None:
    """Within each (range, property, subset, group), flag the two top R2."""
    buckets: dict[tuple[str, str, str, str], list[EvalRow]] = {}
    for row in rows:
        if row.r2 is None:
            continue
        buckets.setdefault(
            (row.range_tag, row.property_name, row.subset, row.group), []
        ).append(row)
    for bucket in buckets.values():
        ranked = sorted(
            bucket, key=lambda r: (-r.r2, FAMILY_ORDER.index(r.family))
        )
        if len(ranked) >= 1:
            ranked[0].flags.append("best_in_group")
        if len(ranked) >= 2:
            ranked[1].flags.append("second_in_group")


# ---------------------------------------------------------------------------
# region generalization


def _display(prop: str, value: float) -> float:
    return value * 100.0 if prop == "fermentation" else value


@dataclass
class RegionRow:
    batch_id: str
    region: str
    country: str
    property_name: str
    unit: str
    lab_value: float
    family: str
    range_tag: str
    prediction: float
    pred_std: float
    abs_error: float
    rank: int
    flags: list[str] = field(default_factory=list)


@dataclass
class RegionReport:
    rows: list[RegionRow]

    _COLUMNS = (
        "batch_id",
        "region",
        "country",
        "property",
        "unit",
        "lab_value",
        "family",
        "range",
        "prediction",
        "pred_std",
        "abs_error",
        "rank",
        "flags",
    )

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self._COLUMNS)
            for r in self.rows:
                writer.writerow(
                    [
                        r.batch_id,
                        r.region,
                        r.country,
                        r.property_name,
                        r.unit,
                        f"{r.lab_value:.4f}",
                        r.family,
                        r.range_tag,
                        f"{r.prediction:.4f}",
                        f"{r.pred_std:.4f}",
                        f"{r.abs_error:.4f}",
                        r.rank,
                        ";".join(r.flags),
                    ]
                )

    def render_text(self) -> str:
        lines = []
        current = None
        for r in self.rows:
            head = (r.batch_id, r.property_name)
            if head != current:
                current = head
                lines.append(
                    f"-- {r.region} ({r.country}) / {r.property_name} "
                    f"[lab {r.lab_value:.4f} {r.unit}] --"
                )
            lines.append(
                f"  #{r.rank} {r.family:<8}{r.range_tag:<5} "
                f"pred {r.prediction:9.4f} +- {r.pred_std:.4f}  "
                f"|err| {r.abs_error:.4f} {';'.join(r.flags)}"
            )
        return "\n".join(lines)


def region_generalization(
    predictors: dict[tuple[str, str, str], object],
    features: dict[tuple[str, str], np.ndarray],
    labels: dict[str, BatchRecord],
    scalers: dict[str, TargetScaler],
) -> RegionReport:
    """Rank every model family by how close its batch-mean prediction
    lands to the lab value, per region batch and property.

    Predictions are made per realization, de-normalized, then averaged;
    ties in absolute error break toward the smaller prediction spread,
    then by family and range name.
    """
    if not features:
        raise ValidationError("no region features supplied")
    batch_order: list[str] = []
    for batch_id, _ in features:
        if batch_id not in batch_order:
            batch_order.append(batch_id)
    for batch_id in batch_order:
        if batch_id not in labels:
            raise IntegrityError(f"region batch {batch_id!r} has no label row")
    rows: list[RegionRow] = []
    for batch_id in batch_order:
        record = labels[batch_id]
        lab = dict(zip(PROPERTIES, record.targets()))
        for p_idx, prop in enumerate(PROPERTIES):
            candidates: list[RegionRow] = []
            for family in FAMILY_ORDER:
                for range_tag in RANGE_TAGS:
                    model = predictors.get((family, range_tag, prop))
                    X = features.get((batch_id, range_tag))
                    if model is None or X is None:
                        continue
                    scaler = scalers[range_tag]
                    norm = np.asarray(model.predict(X))
                    units = norm * float(scaler.scale_[p_idx]) + float(
                        scaler.data_min_[p_idx]
                    )
                    pred_mean = _display(prop, float(units.mean()))
                    pred_std = _display(prop, float(units.std()))
                    lab_disp = _display(prop, lab[prop])
                    candidates.append(
                        RegionRow(
                            batch_id=batch_id,
                            region=record.region,
                            country=record.country,
                            property_name=prop,
                            unit=PROPERTY_UNITS[prop],
                            lab_value=lab_disp,
                            family=family,
                            range_tag=range_tag,
                            prediction=pred_mean,
                            pred_std=pred_std,
                            abs_error=abs(pred_mean - lab_disp),
                            rank=0,
                        )
                    )
            candidates.sort(
                key=lambda r: (
                    r.abs_error,
                    r.pred_std,
                    FAMILY_ORDER.index(r.family),
                    r.range_tag,
                )
            )
            for i, row in enumerate(candidates, start=1):
                row.rank = i
                if i == 1:
                    row.flags.append("closest")
                rows.append(row)
    return RegionReport(rows=rows)
