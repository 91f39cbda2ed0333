"""Staged processing runs: filter, calibrate, bootstrap, QC, train,
evaluate, regions.

Each stage reads the previous stage's output directory under one run
directory and writes its own subdirectory, refusing to overwrite an
existing one, so a run directory is append-only. Every stage appends a
line to run_log.jsonl with the config hash, the seeds it used and its
row counts; the log carries no timestamps so identical runs produce
identical bytes.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .background import FilterPolicy, ReferenceSet, filter_spectra
from .calibration import (
    CalibrationPair,
    CropWindow,
    compute_reflectance,
    crop,
    crop_grid,
    mask_saturated,
)
from .config import config_hash, resolve_path, validate_config
from .decomposition import PrincipalComponents
from .errors import ConfigError, IntegrityError
from .evaluation import evaluate_suite, region_generalization
from .io import (
    ROLE_REGION,
    ROLE_TRAIN,
    SpectralDataset,
    load_dataset,
    save_dataset,
)
from .models import (
    KNNRegressor,
    NetworkRegressor,
    RandomForestRegressor,
    SupportVectorRegressor,
    grid_search,
    load_model,
    save_model,
)
from .models.network import cnn_layers, mlp_layers
from .plots import svg_scatter
from .resampling import (
    BootstrapConfig,
    DatasetSplit,
    FeatureTable,
    SplitPolicy,
    TargetScaler,
    assemble_dataset,
    bootstrap_means,
    normalize_split,
)
from .types import PROPERTIES, REFLECTANCE, Spectrum

STAGE_FILTER = "filtered"
STAGE_CALIBRATE = "calibrated"
STAGE_BOOTSTRAP = "bootstrapped"
DIR_MODELS = "models"
DIR_REPORTS = "reports"
DIR_SPLITS = "splits"


@dataclass
class RunContext:
    """One run directory plus the resolved configuration driving it."""

    cfg: dict
    config_dir: Path
    out_dir: Path

    def __post_init__(self) -> None:
        self.config_dir = Path(self.config_dir)
        self.out_dir = Path(self.out_dir)
        problems = validate_config(self.cfg, self.config_dir, require_manifest=False)
        if problems:
            raise ConfigError("; ".join(problems))

    # -- paths ---------------------------------------------------------

    def source_manifest(self) -> Path:
        return resolve_path(self.config_dir, self.cfg["paths"]["manifest"])

    def stage_dir(self, name: str) -> Path:
        return self.out_dir / name

    def stage_manifest(self, name: str) -> Path:
        return self.stage_dir(name) / "manifest.json"

    # -- logging -------------------------------------------------------

    def log(self, stage: str, **fields) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        entry = {"stage": stage, "config_hash": config_hash(self.cfg)}
        entry.update(fields)
        with (self.out_dir / "run_log.jsonl").open("a") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def fresh_dir(self, name: str) -> Path:
        path = self.stage_dir(name)
        if path.exists():
            raise ConfigError(
                f"stage output {path} already exists; run directories are "
                "append-only, use a new --out directory"
            )
        path.mkdir(parents=True)
        return path

    def load_source(self) -> SpectralDataset:
        manifest = self.source_manifest()
        if not manifest.is_file():
            raise ConfigError(f"paths.manifest not found: {manifest}")
        return load_dataset(manifest)

    def load_stage(self, name: str, needed_by: str) -> SpectralDataset:
        manifest = self.stage_manifest(name)
        if not manifest.is_file():
            raise ConfigError(
                f"stage '{needed_by}' needs {manifest}; run the '{name}' "
                "producing stage first"
            )
        return load_dataset(manifest)


class RunLock:
    """A best-effort lock file guarding one run directory."""

    def __init__(self, out_dir: Path):
        self.path = Path(out_dir) / ".lock"

    def __enter__(self) -> "RunLock":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(
                f"run directory is locked by {self.path}; remove it if no "
                "other run is active"
            ) from None
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc) -> None:
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass


# ---------------------------------------------------------------------------
# stages


def stage_ingest(ctx: RunContext) -> dict:
    """Load and validate the source dataset; report what is in it."""
    dataset = ctx.load_source()
    counts = {
        f"{batch}/{tag}": len(spectra) for (batch, tag), spectra in dataset.scans.items()
    }
    summary = {
        "kind": dataset.kind,
        "ranges": {tag: len(grid) for tag, grid in dataset.grids.items()},
        "batches": len(dataset.batch_ids()),
        "train_batches": sum(1 for r in dataset.roles.values() if r == ROLE_TRAIN),
        "region_batches": sum(1 for r in dataset.roles.values() if r == ROLE_REGION),
        "scans": counts,
    }
    ctx.log("ingest", counts={"batches": summary["batches"]}, scans=counts)
    return summary


def _filter_policy(ctx: RunContext, range_tag: str) -> FilterPolicy:
    filt = ctx.cfg["filter"]
    return FilterPolicy(
        mode=filt["mode"], tau=filt["tau"], n=int(filt["top_n"][range_tag])
    )


def stage_filter(ctx: RunContext) -> dict:
    """Drop belt scans by spectral angle; keep everything else intact."""
    dataset = ctx.load_source()
    out_dir = ctx.fresh_dir(STAGE_FILTER)
    kept: dict[tuple[str, str], list[Spectrum]] = {}
    rows = []
    counts: dict[str, int] = {}
    warnings: list[str] = []
    for (batch_id, tag), spectra in dataset.scans.items():
        if tag not in dataset.background:
            raise ConfigError(
                f"dataset has no background references for range {tag}; "
                "the filter stage needs known belt spectra"
            )
        refs = ReferenceSet(dataset.background[tag])
        result = filter_spectra(spectra, refs, _filter_policy(ctx, tag))
        kept[(batch_id, tag)] = result.kept
        counts[f"{batch_id}/{tag}"] = len(result.kept)
        warnings.extend(f"{batch_id}/{tag}: {w}" for w in result.warnings)
        for spec, dist, flag in zip(spectra, result.distances, result.kept_flags):
            rows.append(
                (batch_id, tag, spec.meta.get("scan_index"), f"{dist:.9g}", int(flag))
            )
    filtered = SpectralDataset(
        kind=dataset.kind,
        grids=dataset.grids,
        scans=kept,
        labels=dataset.labels,
        roles=dataset.roles,
        references=dataset.references,
        background=dataset.background,
    )
    save_dataset(filtered, out_dir)
    with (out_dir / "distances.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["batch_id", "range", "scan_index", "distance", "kept"])
        writer.writerows(rows)
    ctx.log("filter", counts=counts, warnings=warnings, seeds={})
    return {"kept": counts, "warnings": warnings}


def stage_calibrate(ctx: RunContext) -> dict:
    """Convert kept scans to reflectance and crop to the analysis windows."""
    dataset = ctx.load_stage(STAGE_FILTER, "calibrate")
    out_dir = ctx.fresh_dir(STAGE_CALIBRATE)
    cal_cfg = ctx.cfg["calibrate"]
    windows = {
        tag: CropWindow(float(w[0]), float(w[1]))
        for tag, w in ctx.cfg["windows"].items()
    }
    grids = {}
    scans: dict[tuple[str, str], list[Spectrum]] = {}
    counts: dict[str, int] = {}
    for (batch_id, tag), spectra in dataset.scans.items():
        pair_specs = dataset.references.get((batch_id, tag))
        if pair_specs is None:
            raise IntegrityError(
                f"batch {batch_id!r} {tag} has no white/black references"
            )
        pair = CalibrationPair(*pair_specs)
        window = windows[tag]
        grids[tag] = crop_grid(dataset.grids[tag], window)
        ceiling = cal_cfg.get("saturation_ceiling")
        out = []
        for spec in spectra:
            if ceiling is not None:
                spec = mask_saturated(spec, float(ceiling))
            refl = compute_reflectance(spec, pair, clip_max=float(cal_cfg["clip_max"]))
            out.append(crop(refl, window))
        scans[(batch_id, tag)] = out
        counts[f"{batch_id}/{tag}"] = len(out)
    calibrated = SpectralDataset(
        kind=REFLECTANCE,
        grids=grids,
        scans=scans,
        labels=dataset.labels,
        roles=dataset.roles,
    )
    save_dataset(calibrated, out_dir)
    bands = {tag: len(grid) for tag, grid in grids.items()}
    ctx.log("calibrate", counts=counts, bands=bands, seeds={})
    return {"scans": counts, "bands": bands}


def stage_bootstrap(ctx: RunContext) -> dict:
    """Augment each batch into subset-mean realizations."""
    dataset = ctx.load_stage(STAGE_CALIBRATE, "bootstrap")
    out_dir = ctx.fresh_dir(STAGE_BOOTSTRAP)
    boot = ctx.cfg["bootstrap"]
    seed = int(ctx.cfg["seeds"]["bootstrap"])
    scans: dict[tuple[str, str], list[Spectrum]] = {}
    counts: dict[str, int] = {}
    for (batch_id, tag), spectra in dataset.scans.items():
        config = BootstrapConfig(
            subset_size=int(boot["subset_size"]),
            realizations=int(boot["realizations"][tag]),
            seed=seed,
            with_replacement=bool(boot["with_replacement"]),
        )
        scans[(batch_id, tag)] = bootstrap_means(spectra, config, batch_id=batch_id)
        counts[f"{batch_id}/{tag}"] = len(scans[(batch_id, tag)])
    augmented = SpectralDataset(
        kind=dataset.kind,
        grids=dataset.grids,
        scans=scans,
        labels=dataset.labels,
        roles=dataset.roles,
    )
    save_dataset(augmented, out_dir)
    ctx.log("bootstrap", counts=counts, seeds={"bootstrap": seed})
    return {"realizations": counts}


def stage_qc_pca(ctx: RunContext) -> dict:
    """Project realizations onto principal components for a QC look."""
    dataset = ctx.load_stage(STAGE_BOOTSTRAP, "qc-pca")
    reports = ctx.stage_dir(DIR_REPORTS)
    reports.mkdir(parents=True, exist_ok=True)
    n_components = int(ctx.cfg["pca"]["n_components"])
    summary = {}
    for tag in dataset.ranges():
        batches = [b for (b, t) in dataset.scans if t == tag]
        if not batches:
            continue
        X = np.concatenate(
            [np.stack([s.values for s in dataset.scans[(b, tag)]]) for b in batches]
        )
        ids = np.concatenate(
            [[b] * len(dataset.scans[(b, tag)]) for b in batches]
        )
        pca = PrincipalComponents(n_components=n_components).fit(X)
        scores = pca.transform(X)
        csv_path = reports / f"pca_scores_{tag}.csv"
        with csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["batch_id", "row"] + [f"pc{i + 1}" for i in range(n_components)]
            )
            for i, (b, row) in enumerate(zip(ids, scores)):
                writer.writerow([b, i] + [f"{v:.9g}" for v in row])
        if n_components >= 2:
            groups = {}
            for b in batches:
                mask = ids == b
                groups[b] = (scores[mask, 0], scores[mask, 1])
            svg_scatter(
                groups,
                reports / f"pca_scatter_{tag}.svg",
                f"{tag} realizations, first two components",
                "PC1",
                "PC2",
            )
        summary[tag] = {
            "explained_variance_ratio": [
                float(v) for v in pca.explained_variance_ratio_
            ],
            "rows": int(X.shape[0]),
        }
    ctx.log("qc-pca", summary=summary, seeds={})
    return summary


def _network_kwargs(ctx: RunContext) -> dict:
    net = ctx.cfg["train"]["network"]
    return {
        "batch_size": int(net["batch_size"]),
        "max_epochs": int(net["max_epochs"]),
        "patience": int(net["patience"]),
        "validation_fraction": float(net["validation_fraction"]),
    }


def _family_factory(ctx: RunContext, family: str):
    """A callable mapping grid params to a fresh estimator of the family."""
    seeds = ctx.cfg["seeds"]
    net_cfg = ctx.cfg["train"]["network"]

    def make(params: dict):
        params = dict(params)
        if family == "knn":
            return KNNRegressor(**params)
        if family == "forest":
            return RandomForestRegressor(seed=int(seeds["train"]), **params)
        if family == "svr":
            return SupportVectorRegressor(**params)
        if family == "mlp":
            layers = mlp_layers(
                tuple(net_cfg["mlp_widths"]), net_cfg["activation"]
            )
        elif family == "cnn":
            layers = cnn_layers(
                tuple(net_cfg["cnn_channels"]),
                kernel=int(net_cfg["cnn_kernel"]),
                pool=int(net_cfg["cnn_pool"]),
                dense=int(net_cfg["cnn_dense"]),
                activation=net_cfg["activation"],
            )
        else:
            raise ConfigError(f"unknown family {family!r}")
        kwargs = _network_kwargs(ctx)
        kwargs.update(params)
        return NetworkRegressor(layers=layers, seed=int(seeds["train"]), **kwargs)

    return make


def _grid_lists(grid: dict) -> dict:
    # JSON null inside a grid list means "unlimited" (e.g. tree depth)
    return {k: list(v) for k, v in grid.items()}


def _split_file(ctx: RunContext, tag: str) -> Path:
    return ctx.stage_dir(DIR_SPLITS) / f"split_{tag}.npz"


def _save_split(
    path: Path, split: DatasetSplit, scaler: TargetScaler
) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "range": split.range_tag,
        "held_out_batches": list(split.held_out_batches),
        "scaler_min": [float(v) for v in scaler.data_min_],
        "scaler_max": [float(v) for v in scaler.data_max_],
    }
    with path.open("wb") as fh:
        np.savez(
            fh,
            __meta__=np.asarray(json.dumps(meta, sort_keys=True)),
            train_X=split.train.X,
            train_y=split.train.y,
            train_batches=np.asarray([str(b) for b in split.train.batch_ids]),
            test_X=split.test.X,
            test_y=split.test.y,
            test_batches=np.asarray([str(b) for b in split.test.batch_ids]),
        )


def _load_split(path: Path) -> tuple[DatasetSplit, TargetScaler]:
    if not path.is_file():
        raise ConfigError(f"missing split file {path}; run the train stage first")
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"][()]))
        tag = meta["range"]
        train = FeatureTable(
            data["train_X"], data["train_y"],
            np.asarray([str(b) for b in data["train_batches"]], dtype=object), tag,
        )
        test = FeatureTable(
            data["test_X"], data["test_y"],
            np.asarray([str(b) for b in data["test_batches"]], dtype=object), tag,
        )
    split = DatasetSplit(
        train=train,
        test=test,
        range_tag=tag,
        held_out_batches=tuple(meta["held_out_batches"]),
    )
    scaler = TargetScaler()
    scaler.data_min_ = np.asarray(meta["scaler_min"], dtype=np.float64)
    scaler.data_max_ = np.asarray(meta["scaler_max"], dtype=np.float64)
    scaler.scale_ = scaler.data_max_ - scaler.data_min_
    scaler.n_features_in_ = scaler.data_min_.size
    return split, scaler


def stage_train(ctx: RunContext) -> dict:
    """Split, normalize, grid-search and fit every enabled family."""
    dataset = ctx.load_stage(STAGE_BOOTSTRAP, "train")
    models_dir = ctx.fresh_dir(DIR_MODELS)
    reports = ctx.stage_dir(DIR_REPORTS)
    reports.mkdir(parents=True, exist_ok=True)
    cfg = ctx.cfg
    seeds = cfg["seeds"]
    policy = SplitPolicy(
        held_out_batches=tuple(cfg["split"]["held_out_batches"]),
        test_fraction=float(cfg["split"]["test_fraction"]),
        seed=int(seeds["split"]),
    )
    families = list(cfg["train"]["families"])
    folds = int(cfg["train"]["folds"])
    cv_rows = []
    chosen = {}
    counts = {}
    for tag in dataset.ranges():
        realizations = {
            b: dataset.scans[(b, tag)]
            for (b, t) in dataset.scans
            if t == tag and dataset.roles[b] == ROLE_TRAIN
        }
        if not realizations:
            continue
        split = assemble_dataset(realizations, dataset.labels, policy, tag)
        norm_split, scaler = normalize_split(split)
        _save_split(_split_file(ctx, tag), norm_split, scaler)
        counts[tag] = {"train": len(norm_split.train), "test": len(norm_split.test)}
        for family in families:
            factory = _family_factory(ctx, family)
            grid = _grid_lists(cfg["train"]["grids"][family])
            for p_idx, prop in enumerate(PROPERTIES):
                y = norm_split.train.y[:, p_idx]
                result = grid_search(
                    factory,
                    grid,
                    norm_split.train.X,
                    y,
                    folds=folds,
                    seed=int(seeds["cv"]),
                )
                model = factory(result.best_params)
                model.fit(norm_split.train.X, y)
                save_model(
                    models_dir / f"{family}_{tag}_{prop}.npz",
                    model,
                    family=family,
                    property_name=prop,
                    range_tag=tag,
                    scaler_min=float(scaler.data_min_[p_idx]),
                    scaler_max=float(scaler.data_max_[p_idx]),
                    config_echo={
                        "best_params": result.best_params,
                        "cv_folds": folds,
                        "seeds": {
                            "cv": int(seeds["cv"]),
                            "train": int(seeds["train"]),
                            "split": int(seeds["split"]),
                        },
                    },
                )
                chosen[f"{family}/{tag}/{prop}"] = result.best_params
                for row in result.table:
                    cv_rows.append(
                        [
                            family,
                            tag,
                            prop,
                            json.dumps(row["params"], sort_keys=True),
                            row["fold"],
                            f"{row['mse']:.9g}",
                        ]
                    )
                for row in result.means:
                    cv_rows.append(
                        [
                            family,
                            tag,
                            prop,
                            json.dumps(row["params"], sort_keys=True),
                            "mean",
                            f"{row['mean_mse']:.9g}",
                        ]
                    )
    with (reports / "cv_results.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["family", "range", "property", "params", "fold", "mse"])
        writer.writerows(cv_rows)
    ctx.log(
        "train",
        counts=counts,
        chosen=chosen,
        seeds={k: int(seeds[k]) for k in ("split", "cv", "train")},
    )
    return {"rows": counts, "chosen": chosen}


def _load_predictors(ctx: RunContext) -> dict:
    models_dir = ctx.stage_dir(DIR_MODELS)
    if not models_dir.is_dir():
        raise ConfigError(f"missing {models_dir}; run the train stage first")
    predictors = {}
    for path in sorted(models_dir.glob("*.npz")):
        loaded = load_model(path)
        key = (loaded.family, loaded.range_tag, loaded.property_name)
        predictors[key] = loaded.model
    if not predictors:
        raise ConfigError(f"no model containers found in {models_dir}")
    return predictors


def stage_evaluate(ctx: RunContext) -> dict:
    """Score all trained models and write the evaluation report."""
    predictors = _load_predictors(ctx)
    reports = ctx.stage_dir(DIR_REPORTS)
    reports.mkdir(parents=True, exist_ok=True)
    splits = {}
    scalers = {}
    for tag in ("VIS", "NIR"):
        path = _split_file(ctx, tag)
        if path.is_file():
            splits[tag], scalers[tag] = _load_split(path)
    report = evaluate_suite(
        predictors,
        splits,
        scalers,
        expected_families=tuple(ctx.cfg["train"]["families"]),
    )
    report.to_csv(reports / "eval_report.csv")
    (reports / "eval_report.txt").write_text(report.render_text() + "\n")
    for tag, split in splits.items():
        groups = {}
        for (family, rtag, prop), model in sorted(predictors.items()):
            if rtag != tag or prop != "moisture" or not len(split.test):
                continue
            groups[family] = (
                split.test.y[:, PROPERTIES.index(prop)],
                np.asarray(model.predict(split.test.X)),
            )
        if groups:
            svg_scatter(
                groups,
                reports / f"pred_vs_true_moisture_{tag}.svg",
                f"moisture, normalized, {tag} test rows",
                "true",
                "predicted",
            )
    ctx.log("evaluate", rows=len(report.rows), seeds={})
    return {"rows": len(report.rows), "report": str(reports / "eval_report.csv")}


def stage_regions(ctx: RunContext) -> dict:
    """Apply trained models to the single-origin batches and rank them."""
    dataset = ctx.load_stage(STAGE_BOOTSTRAP, "regions")
    predictors = _load_predictors(ctx)
    reports = ctx.stage_dir(DIR_REPORTS)
    reports.mkdir(parents=True, exist_ok=True)
    scalers = {}
    for tag in ("VIS", "NIR"):
        path = _split_file(ctx, tag)
        if path.is_file():
            _, scalers[tag] = _load_split(path)
    features = {}
    for (batch_id, tag), spectra in dataset.scans.items():
        if dataset.roles[batch_id] != ROLE_REGION:
            continue
        if tag not in scalers:
            continue
        features[(batch_id, tag)] = np.stack([s.values for s in spectra])
    if not features:
        raise IntegrityError("dataset has no region-role batches to score")
    report = region_generalization(predictors, features, dataset.labels, scalers)
    report.to_csv(reports / "region_report.csv")
    (reports / "region_report.txt").write_text(report.render_text() + "\n")
    ctx.log("regions", rows=len(report.rows), seeds={})
    return {"rows": len(report.rows), "report": str(reports / "region_report.csv")}


PIPELINE_STAGES = (
    ("filter", stage_filter),
    ("calibrate", stage_calibrate),
    ("bootstrap", stage_bootstrap),
    ("qc-pca", stage_qc_pca),
    ("train", stage_train),
    ("evaluate", stage_evaluate),
    ("regions", stage_regions),
)


def run_pipeline(ctx: RunContext) -> dict:
    """Run every stage in order on one run directory."""
    summary = {}
    for name, fn in PIPELINE_STAGES:
        summary[name] = fn(ctx)
    return summary
