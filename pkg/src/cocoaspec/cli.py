"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration problem, 2 broken or
inconsistent data, 3 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import (
    config_hash,
    default_config,
    load_config,
    resolve_path,
    validate_config,
)
from .errors import (
    CocoaSpecError,
    ConfigError,
    DataError,
    TrainingDivergenceError,
)
from .models import load_model
from .pipeline import (
    RunContext,
    RunLock,
    run_pipeline,
    stage_bootstrap,
    stage_calibrate,
    stage_evaluate,
    stage_filter,
    stage_ingest,
    stage_qc_pca,
    stage_regions,
    stage_train,
)
from .synth import CorpusSpec, default_profiles, write_corpus
from .types import PROPERTY_UNITS

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3


def _set_override(cfg: dict, spec: str) -> None:
    """Apply one --set dotted.path=json_value override in place."""
    if "=" not in spec:
        raise ConfigError(f"--set expects key=value, got {spec!r}")
    key, _, raw = spec.partition("=")
    key = key.strip()
    if not key:
        raise ConfigError(f"--set expects key=value, got {spec!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        nxt = node.get(part)
        if not isinstance(nxt, dict):
            raise ConfigError(f"--set path {key!r} does not name a config field")
        node = nxt
    if parts[-1] not in node:
        raise ConfigError(f"--set path {key!r} does not name a config field")
    node[parts[-1]] = value


def _load_cfg(args) -> tuple[dict, Path]:
    if args.config:
        cfg = load_config(args.config)
        config_dir = Path(args.config).resolve().parent
    else:
        cfg = default_config()
        config_dir = Path.cwd()
    for spec in args.set or []:
        _set_override(cfg, spec)
    return cfg, config_dir


def _context(args) -> RunContext:
    cfg, config_dir = _load_cfg(args)
    return RunContext(cfg=cfg, config_dir=config_dir, out_dir=Path(args.out))


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_validate_config(args) -> int:
    cfg, config_dir = _load_cfg(args)
    problems = validate_config(cfg, config_dir, require_manifest=True)
    if problems:
        for p in problems:
            print(f"config error - {p}", file=sys.stderr)
        return EXIT_USAGE
    print(f"config OK (hash {config_hash(cfg)})")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg, config_dir = _load_cfg(args)
    problems = validate_config(cfg, config_dir, require_manifest=False)
    if problems:
        raise ConfigError("; ".join(problems))
    manifest = resolve_path(config_dir, cfg["paths"]["manifest"])
    dest = Path(args.out) if args.out else manifest.parent
    synth = cfg["synth"]
    spec = CorpusSpec(
        n_scans=int(synth["n_scans"]),
        belt_fraction=float(synth["belt_fraction"]),
        seed=int(cfg["seeds"]["synth"]),
        profiles=default_profiles(
            vis_bands=int(synth["bands"]["VIS"]),
            nir_bands=int(synth["bands"]["NIR"]),
            noise_sd=float(synth["noise_sd"]),
        ),
    )
    path = write_corpus(spec, dest)
    print(f"wrote corpus manifest {path}")
    return EXIT_OK


def _stage_cmd(stage_fn):
    def run(args) -> int:
        ctx = _context(args)
        with RunLock(ctx.out_dir):
            summary = stage_fn(ctx)
        _print(summary)
        return EXIT_OK

    return run


def cmd_pipeline(args) -> int:
    ctx = _context(args)
    with RunLock(ctx.out_dir):
        summary = run_pipeline(ctx)
    _print(summary)
    return EXIT_OK


def cmd_predict(args) -> int:
    loaded = load_model(args.model)
    path = Path(args.input)
    if not path.is_file():
        raise DataError(f"input file not found: {path}")
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("scan_index"):
        raise DataError(f"{path} is not a scan table (missing scan_index header)")
    indices = []
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        try:
            indices.append(int(cells[0]))
            rows.append([float(v) for v in cells[1:]])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise DataError(f"{path} holds no scans")
    X = np.asarray(rows)
    n_expected = int(loaded.model.n_features_in_)
    if X.shape[1] != n_expected:
        raise DataError(
            f"model expects {n_expected} bands but input rows have {X.shape[1]}"
        )
    preds = loaded.predict_units(X)
    display = preds * 100.0 if loaded.property_name == "fermentation" else preds
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scan_index", "family", "range", "property", "unit", "prediction"])
        for idx, value in zip(indices, display):
            writer.writerow(
                [
                    idx,
                    loaded.family,
                    loaded.range_tag,
                    loaded.property_name,
                    PROPERTY_UNITS[loaded.property_name],
                    f"{value:.6f}",
                ]
            )
    print(f"wrote {len(indices)} predictions to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cocoaspec",
        description=(
            "Spectral processing and regression for cocoa bean quality: "
            "filter belt scans, calibrate reflectance, augment by bootstrap, "
            "train and evaluate per-property models."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, out_default="run") -> None:
        p.add_argument("--config", help="JSON config file (defaults applied underneath)")
        p.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="override one config field, e.g. --set filter.tau=0.3",
        )
        if out_default is not None:
            p.add_argument(
                "--out", default=out_default, help="run directory (default: %(default)s)"
            )

    p = sub.add_parser("validate-config", help="check a config file and print its hash")
    common(p, out_default=None)
    p.set_defaults(func=cmd_validate_config)

    p = sub.add_parser("synth", help="generate the synthetic corpus")
    common(p, out_default=None)
    p.add_argument("--out", help="corpus directory (default: paths.manifest's directory)")
    p.set_defaults(func=cmd_synth)

    for name, fn, text in (
        ("ingest", stage_ingest, "load and summarize the source dataset"),
        ("filter", stage_filter, "drop conveyor-belt scans by spectral angle"),
        ("calibrate", stage_calibrate, "convert to reflectance and crop windows"),
        ("bootstrap", stage_bootstrap, "augment batches into subset means"),
        ("qc-pca", stage_qc_pca, "project realizations onto principal components"),
        ("train", stage_train, "split, grid-search and fit all model families"),
        ("evaluate", stage_evaluate, "score trained models on the test rows"),
        ("regions", stage_regions, "rank models on the single-origin batches"),
    ):
        p = sub.add_parser(name, help=text)
        common(p)
        p.set_defaults(func=_stage_cmd(fn))

    p = sub.add_parser("pipeline", help="run filter through regions in one go")
    common(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("predict", help="apply one saved model to a scan table")
    p.add_argument("--model", required=True, help="model container (.npz)")
    p.add_argument("--input", required=True, help="scan CSV (scan_index header)")
    p.add_argument("--output", required=True, help="prediction CSV to write")
    p.set_defaults(func=cmd_predict)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CocoaSpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
