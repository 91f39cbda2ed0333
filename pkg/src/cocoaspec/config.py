"""JSON run configuration: defaults, merging, validation, hashing.

A run config is a JSON object overlaying the package defaults, so a
config file only needs the fields it changes. Relative paths inside a
config resolve against the config file's directory. Validation returns
a list of diagnostics naming the offending field; it never raises for
content problems, only for unreadable files.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from .errors import ConfigError
from .types import NIR, VIS

KNOWN_FAMILIES = ("knn", "forest", "svr", "mlp", "cnn")

#: Constructor arguments allowed to appear in a family's search grid.
GRID_PARAMS = {
    "knn": ("n_neighbors", "metric"),
    "forest": ("n_trees", "max_depth", "min_samples_leaf", "max_features", "bag_fraction"),
    "svr": ("kernel", "C", "gamma", "epsilon", "tol", "max_iter"),
    "mlp": ("learning_rate", "batch_size", "max_epochs", "patience"),
    "cnn": ("learning_rate", "batch_size", "max_epochs", "patience"),
}

_DEFAULT: dict = {
    "paths": {
        "manifest": "corpus/manifest.json",
    },
    "windows": {
        VIS: [500.0, 800.0],
        NIR: [1100.0, 2000.0],
    },
    "calibrate": {
        "clip_max": 1.5,
        "saturation_ceiling": None,
    },
    "filter": {
        "mode": "top_n",
        "tau": 0.25,
        "top_n": {VIS: 1000, NIR: 500},
    },
    "bootstrap": {
        "subset_size": 50,
        "realizations": {VIS: 1000, NIR: 2000},
        "with_replacement": False,
    },
    "split": {
        "held_out_batches": ["17", "18", "19", "20"],
        "test_fraction": 0.3,
    },
    "pca": {
        "n_components": 2,
    },
    "train": {
        "families": ["knn", "forest", "svr", "mlp"],
        "folds": 5,
        "grids": {
            "knn": {"n_neighbors": [1, 3, 5, 7, 11]},
            "forest": {"n_trees": [100, 300], "max_depth": [8, 16, None]},
            "svr": {"C": [1.0, 10.0, 100.0], "gamma": [0.01, 0.1, 1.0], "epsilon": [0.01, 0.05]},
            "mlp": {"learning_rate": [0.001, 0.0001]},
            "cnn": {"learning_rate": [0.001, 0.0001]},
        },
        "network": {
            "mlp_widths": [64, 32],
            "cnn_channels": [8],
            "cnn_kernel": 5,
            "cnn_pool": 2,
            "cnn_dense": 32,
            "activation": "relu",
            "batch_size": 64,
            "max_epochs": 200,
            "patience": 20,
            "validation_fraction": 0.15,
        },
    },
    "synth": {
        "n_scans": 200,
        "belt_fraction": 0.3,
        "bands": {VIS: 256, NIR: 320},
        "noise_sd": 0.01,
    },
    "seeds": {
        "synth": 101,
        "bootstrap": 202,
        "split": 303,
        "cv": 404,
        "train": 505,
    },
}


def default_config() -> dict:
    return copy.deepcopy(_DEFAULT)


def merge_config(base: dict, override: dict) -> dict:
    """Recursive dict merge; override wins, scalars replace wholesale."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge_config(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | Path) -> dict:
    """Read a JSON config and overlay it on the defaults."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        user = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(user, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return merge_config(_DEFAULT, user)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def resolve_path(base_dir: str | Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else Path(base_dir) / p


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def validate_config(
    cfg: dict, base_dir: str | Path = ".", require_manifest: bool = True
) -> list[str]:
    """Check field types, ranges and cross-field consistency.

    Returns diagnostics like ``"bootstrap.subset_size: must be >= 1"``;
    an empty list means the config is usable. ``require_manifest``
    controls whether paths.manifest must exist on disk (generation
    stages may point at a manifest they are about to create).
    """
    out: list[str] = []

    def bad(fieldname: str, message: str) -> None:
        out.append(f"{fieldname}: {message}")

    for key in cfg:
        if key not in _DEFAULT:
            bad(key, "unknown field")

    paths = cfg.get("paths", {})
    manifest = paths.get("manifest")
    if not isinstance(manifest, str) or not manifest:
        bad("paths.manifest", "must be a non-empty path string")
    elif require_manifest and not resolve_path(base_dir, manifest).is_file():
        bad("paths.manifest", f"file not found: {resolve_path(base_dir, manifest)}")
    for key in paths:
        if key != "manifest":
            bad(f"paths.{key}", "unknown field")

    windows = cfg.get("windows", {})
    for tag, window in windows.items():
        if tag not in (VIS, NIR):
            bad(f"windows.{tag}", "unknown range tag")
            continue
        if (
            not isinstance(window, (list, tuple))
            or len(window) != 2
            or not all(_is_num(v) for v in window)
            or not window[0] < window[1]
        ):
            bad(f"windows.{tag}", "must be [low, high] with low < high")

    calibrate = cfg.get("calibrate", {})
    if not _is_num(calibrate.get("clip_max")) or calibrate.get("clip_max") <= 0:
        bad("calibrate.clip_max", "must be a positive number")
    ceiling = calibrate.get("saturation_ceiling")
    if ceiling is not None and (not _is_num(ceiling) or ceiling <= 0):
        bad("calibrate.saturation_ceiling", "must be null or a positive number")

    filt = cfg.get("filter", {})
    mode = filt.get("mode")
    if mode not in ("threshold", "top_n", "threshold_then_top_n"):
        bad("filter.mode", "must be threshold, top_n or threshold_then_top_n")
    if not _is_num(filt.get("tau")) or filt.get("tau") <= 0:
        bad("filter.tau", "must be a positive number")
    top_n = filt.get("top_n", {})
    for tag, n in top_n.items():
        if tag not in (VIS, NIR):
            bad(f"filter.top_n.{tag}", "unknown range tag")
        elif not _is_int(n) or n < 1:
            bad(f"filter.top_n.{tag}", "must be an integer >= 1")

    boot = cfg.get("bootstrap", {})
    subset_size = boot.get("subset_size")
    if not _is_int(subset_size) or subset_size < 1:
        bad("bootstrap.subset_size", "must be an integer >= 1")
    for tag, k in boot.get("realizations", {}).items():
        if tag not in (VIS, NIR):
            bad(f"bootstrap.realizations.{tag}", "unknown range tag")
        elif not _is_int(k) or k < 1:
            bad(f"bootstrap.realizations.{tag}", "must be an integer >= 1")
    if not isinstance(boot.get("with_replacement"), bool):
        bad("bootstrap.with_replacement", "must be true or false")
    # a subset can never exceed the scans the filter lets through
    if (
        _is_int(subset_size)
        and boot.get("with_replacement") is False
        and mode in ("top_n", "threshold_then_top_n")
    ):
        for tag, n in top_n.items():
            if _is_int(n) and subset_size > n:
                bad(
                    "bootstrap.subset_size",
                    f"subset_size {subset_size} exceeds filter.top_n.{tag}={n} "
                    "kept scans and with_replacement is false",
                )

    split = cfg.get("split", {})
    fraction = split.get("test_fraction")
    if not _is_num(fraction) or not (0.0 <= fraction < 1.0):
        bad("split.test_fraction", "must be a number in [0, 1)")
    held = split.get("held_out_batches")
    if not isinstance(held, list) or not all(isinstance(b, str) and b for b in held):
        bad("split.held_out_batches", "must be a list of batch id strings")

    pca = cfg.get("pca", {})
    if not _is_int(pca.get("n_components")) or pca.get("n_components") < 1:
        bad("pca.n_components", "must be an integer >= 1")

    train = cfg.get("train", {})
    families = train.get("families")
    if not isinstance(families, list) or not families:
        bad("train.families", "must be a non-empty list")
        families = []
    for fam in families:
        if fam not in KNOWN_FAMILIES:
            bad("train.families", f"unknown family {fam!r}")
    if not _is_int(train.get("folds")) or train.get("folds") < 2:
        bad("train.folds", "must be an integer >= 2")
    grids = train.get("grids", {})
    if not isinstance(grids, dict):
        bad("train.grids", "must be an object")
        grids = {}
    for fam, grid in grids.items():
        if fam not in KNOWN_FAMILIES:
            bad(f"train.grids.{fam}", "unknown family")
            continue
        if not isinstance(grid, dict) or not grid:
            bad(f"train.grids.{fam}", "must be a non-empty object")
            continue
        for param, values in grid.items():
            if param not in GRID_PARAMS[fam]:
                bad(
                    f"train.grids.{fam}.{param}",
                    f"not a searchable parameter (allowed: {', '.join(GRID_PARAMS[fam])})",
                )
            elif not isinstance(values, list) or not values:
                bad(f"train.grids.{fam}.{param}", "must be a non-empty list")
    for fam in families:
        if fam in KNOWN_FAMILIES and fam not in grids:
            bad(f"train.grids.{fam}", "family is enabled but has no grid")
    network = train.get("network", {})
    for key in ("batch_size", "max_epochs"):
        if not _is_int(network.get(key)) or network.get(key) < 1:
            bad(f"train.network.{key}", "must be an integer >= 1")
    if not _is_int(network.get("patience")) or network.get("patience") < 0:
        bad("train.network.patience", "must be an integer >= 0")
    vf = network.get("validation_fraction")
    if not _is_num(vf) or not (0.0 <= vf < 1.0):
        bad("train.network.validation_fraction", "must be a number in [0, 1)")

    synth = cfg.get("synth", {})
    if not _is_int(synth.get("n_scans")) or synth.get("n_scans") < 2:
        bad("synth.n_scans", "must be an integer >= 2")
    bf = synth.get("belt_fraction")
    if not _is_num(bf) or not (0.0 <= bf < 1.0):
        bad("synth.belt_fraction", "must be a number in [0, 1)")
    for tag, n in synth.get("bands", {}).items():
        if tag not in (VIS, NIR):
            bad(f"synth.bands.{tag}", "unknown range tag")
        elif not _is_int(n) or n < 4:
            bad(f"synth.bands.{tag}", "must be an integer >= 4")
    if not _is_num(synth.get("noise_sd")) or synth.get("noise_sd") < 0:
        bad("synth.noise_sd", "must be a non-negative number")

    seeds = cfg.get("seeds", {})
    for key in _DEFAULT["seeds"]:
        if not _is_int(seeds.get(key)) or seeds.get(key) < 0:
            bad(f"seeds.{key}", "must be a non-negative integer")
    for key in seeds:
        if key not in _DEFAULT["seeds"]:
            bad(f"seeds.{key}", "unknown field")

    return out
