"""Reading and writing scans, labels, and dataset directories.

A dataset on disk is a directory with a JSON manifest next to plain-text
artifacts:

    manifest.json           keys: format, version, kind, ranges, labels,
                            background, batches
    grids/<RANGE>.txt       one wavelength per line
    scans/<batch>_<RANGE>.csv
    refs/<batch>_<RANGE>_{white,black}.csv
    background/<RANGE>.csv  known belt spectra used by the filter stage
    labels.csv

All floating-point values are written as shortest-round-trip decimal text
with 9 significant digits; loading a file and saving it again is
byte-stable. Values quantized this way differ from their in-memory
originals by at most ~5e-10 relative.

Per-band masks are not persisted: the calibrate stage zeroes masked bands
before anything is written, so a saved spectrum carries zeros where its
mask was set.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DomainError,
    IntegrityError,
    ParseError,
    SchemaError,
    ValidationError,
)
from .types import (
    RANGE_TAGS,
    SPECTRUM_KINDS,
    BatchRecord,
    Spectrum,
    WavelengthGrid,
)

DATASET_FORMAT = "cocoaspec-dataset"
DATASET_VERSION = 1

LABEL_COLUMNS = [
    "batch_id",
    "date",
    "region",
    "country",
    "fermentation_pct",
    "moisture_pct",
    "cadmium_mgkg",
    "polyphenols_mgg",
    "fermentation_hours",
]

_DATE_FORMAT = "%d/%m/%Y"
_BATCH_ID_RE = re.compile(r"^[A-Za-z0-9_-]+$")


def fmt9(x: float) -> str:
    """Format a float as decimal text with 9 significant digits."""
    return format(float(x), ".9g")


def quantize9(x: float) -> float:
    """The float64 value that 9-significant-digit text maps back to."""
    return float(fmt9(x))


def fermentation_ratio(premium: float, standard: float, total: float) -> float:
    """Fraction of well-fermented beans: (premium + standard) / total.

    Counts must be non-negative with premium + standard <= total and
    total > 0.
    """
    if total <= 0:
        raise DomainError("total bean count must be positive")
    if premium < 0 or standard < 0:
        raise DomainError("bean counts must be non-negative")
    if premium + standard > total:
        raise DomainError("fermented counts cannot exceed the total count")
    return (premium + standard) / total


# ---------------------------------------------------------------------------
# grids and scan tables


def save_grid(grid: WavelengthGrid, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [fmt9(v) for v in grid.values]
    path.write_text("\n".join(lines) + "\n")


def load_grid(path: str | Path, range_tag: str) -> WavelengthGrid:
    path = Path(path)
    if not path.is_file():
        raise IntegrityError(f"grid file not found: {path}")
    try:
        values = [float(line) for line in path.read_text().split()]
    except ValueError as exc:
        raise ParseError(f"bad wavelength in {path}: {exc}") from None
    return WavelengthGrid(np.asarray(values), range_tag)


def save_scans(spectra: list[Spectrum], grid: WavelengthGrid, path: str | Path) -> None:
    """Write spectra as CSV: header row of wavelengths, one scan per row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = "scan_index," + ",".join(fmt9(v) for v in grid.values)
    rows = [header]
    for i, spec in enumerate(spectra):
        if spec.grid != grid:
            raise IntegrityError("spectrum grid does not match the dataset grid")
        idx = spec.meta.get("scan_index", i)
        rows.append(str(idx) + "," + ",".join(fmt9(v) for v in spec.values))
    path.write_text("\n".join(rows) + "\n")


def load_scans(
    path: str | Path,
    grid: WavelengthGrid,
    kind: str,
    extra_meta: dict | None = None,
) -> list[Spectrum]:
    path = Path(path)
    if not path.is_file():
        raise IntegrityError(f"scan file not found: {path}")
    if kind not in SPECTRUM_KINDS:
        raise ValidationError(f"unknown spectrum kind {kind!r}")
    text = path.read_text().splitlines()
    if not text:
        raise ParseError(f"scan file {path} is empty")
    header = text[0].split(",")
    if header[0] != "scan_index":
        raise SchemaError(f"scan file {path} is missing the scan_index header")
    try:
        header_wl = np.asarray([float(v) for v in header[1:]])
    except ValueError as exc:
        raise ParseError(f"bad wavelength in {path} header: {exc}") from None
    if not np.array_equal(header_wl, grid.values):
        raise IntegrityError(f"scan file {path} wavelengths do not match the grid")
    spectra = []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        try:
            idx = int(cells[0])
            values = np.asarray([float(v) for v in cells[1:]])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
        meta = {"scan_index": idx}
        if extra_meta:
            meta.update(extra_meta)
        spectra.append(Spectrum(grid, values, kind=kind, meta=meta))
    return spectra


# ---------------------------------------------------------------------------
# labels


def _parse_censored(cell: str) -> tuple[float, bool]:
    """Parse a numeric cell; '<x' means below detection limit x."""
    cell = cell.strip()
    if cell.startswith("<"):
        return float(cell[1:]), True
    return float(cell), False


def load_labels(path: str | Path) -> list[BatchRecord]:
    """Read the label table. Fermentation is given in percent in the file."""
    path = Path(path)
    if not path.is_file():
        raise IntegrityError(f"label file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in LABEL_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"label file {path} missing columns: {', '.join(missing)}")
        records = []
        seen: set[str] = set()
        for lineno, row in enumerate(reader, start=2):
            try:
                batch_id = row["batch_id"].strip()
                date = dt.datetime.strptime(row["date"].strip(), _DATE_FORMAT).date()
                cadmium, censored = _parse_censored(row["cadmium_mgkg"])
                hours_cell = (row["fermentation_hours"] or "").strip()
                record = BatchRecord(
                    batch_id=batch_id,
                    date=date,
                    region=row["region"].strip(),
                    country=row["country"].strip(),
                    fermentation=float(row["fermentation_pct"]) / 100.0,
                    moisture=float(row["moisture_pct"]),
                    cadmium=cadmium,
                    polyphenols=float(row["polyphenols_mgg"]),
                    fermentation_hours=float(hours_cell) if hours_cell else None,
                    cadmium_below_detection=censored,
                )
            except (KeyError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if record.batch_id in seen:
                raise IntegrityError(f"duplicate batch_id {record.batch_id!r} in {path}")
            seen.add(record.batch_id)
            records.append(record)
    if not records:
        raise ParseError(f"label file {path} has no rows")
    return records


def save_labels(records: list[BatchRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(LABEL_COLUMNS)]
    for rec in records:
        cadmium = fmt9(rec.cadmium)
        if rec.cadmium_below_detection:
            cadmium = "<" + cadmium
        hours = "" if rec.fermentation_hours is None else fmt9(rec.fermentation_hours)
        lines.append(
            ",".join(
                [
                    rec.batch_id,
                    rec.date.strftime(_DATE_FORMAT),
                    rec.region,
                    rec.country,
                    fmt9(rec.fermentation * 100.0),
                    fmt9(rec.moisture),
                    cadmium,
                    fmt9(rec.polyphenols),
                    hours,
                ]
            )
        )
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# dataset directories

ROLE_TRAIN = "train"
ROLE_REGION = "region"
ROLES = (ROLE_TRAIN, ROLE_REGION)


@dataclass
class SpectralDataset:
    """Everything one processing stage consumes or produces.

    scans and references are keyed by (batch_id, range_tag); batches do not
    have to cover every range. ``background`` holds the known belt spectra
    per range used by the background filter. ``roles`` marks each batch as
    part of the training shipments or as a single-origin region sample.
    """

    kind: str
    grids: dict[str, WavelengthGrid]
    scans: dict[tuple[str, str], list[Spectrum]]
    labels: dict[str, BatchRecord]
    roles: dict[str, str]
    references: dict[tuple[str, str], tuple[Spectrum, Spectrum]] = field(
        default_factory=dict
    )
    background: dict[str, list[Spectrum]] = field(default_factory=dict)

    def batch_ids(self) -> list[str]:
        out: list[str] = []
        for batch_id, _ in self.scans:
            if batch_id not in out:
                out.append(batch_id)
        return out

    def ranges(self) -> list[str]:
        return [tag for tag in RANGE_TAGS if tag in self.grids]

    def validate(self) -> None:
        if self.kind not in SPECTRUM_KINDS:
            raise ValidationError(f"unknown dataset kind {self.kind!r}")
        for (batch_id, tag), spectra in self.scans.items():
            if tag not in self.grids:
                raise IntegrityError(f"scans reference unknown range {tag!r}")
            if batch_id not in self.labels:
                raise IntegrityError(f"batch {batch_id!r} has scans but no label row")
            if batch_id not in self.roles:
                raise IntegrityError(f"batch {batch_id!r} has no role")
            for spec in spectra:
                if spec.grid != self.grids[tag]:
                    raise IntegrityError(
                        f"batch {batch_id!r} {tag} scan grid mismatch"
                    )
        for batch_id, role in self.roles.items():
            if role not in ROLES:
                raise ValidationError(f"unknown role {role!r} for batch {batch_id!r}")


def save_dataset(dataset: SpectralDataset, root: str | Path) -> Path:
    """Write a dataset directory; returns the manifest path."""
    dataset.validate()
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "kind": dataset.kind,
        "ranges": {},
        "labels": "labels.csv",
        "batches": [],
    }
    for tag, grid in dataset.grids.items():
        rel = f"grids/{tag}.txt"
        save_grid(grid, root / rel)
        manifest["ranges"][tag] = rel
    save_labels(list(dataset.labels.values()), root / "labels.csv")
    if dataset.background:
        manifest["background"] = {}
        for tag, spectra in dataset.background.items():
            rel = f"background/{tag}.csv"
            save_scans(spectra, dataset.grids[tag], root / rel)
            manifest["background"][tag] = rel
    for batch_id in dataset.batch_ids():
        if not _BATCH_ID_RE.match(batch_id):
            raise ValidationError(f"batch id {batch_id!r} is not filesystem safe")
        entry: dict = {
            "batch_id": batch_id,
            "role": dataset.roles[batch_id],
            "scans": {},
        }
        for tag in dataset.ranges():
            spectra = dataset.scans.get((batch_id, tag))
            if spectra is None:
                continue
            rel = f"scans/{batch_id}_{tag}.csv"
            save_scans(spectra, dataset.grids[tag], root / rel)
            entry["scans"][tag] = rel
            pair = dataset.references.get((batch_id, tag))
            if pair is not None:
                white_rel = f"refs/{batch_id}_{tag}_white.csv"
                black_rel = f"refs/{batch_id}_{tag}_black.csv"
                save_scans([pair[0]], dataset.grids[tag], root / white_rel)
                save_scans([pair[1]], dataset.grids[tag], root / black_rel)
                entry.setdefault("references", {})[tag] = {
                    "white": white_rel,
                    "black": black_rel,
                }
        manifest["batches"].append(entry)
    manifest_path = root / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def load_dataset(manifest_path: str | Path) -> SpectralDataset:
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise IntegrityError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"manifest {manifest_path} is not valid JSON: {exc}") from None
    for key in ("format", "version", "kind", "ranges", "labels", "batches"):
        if key not in manifest:
            raise SchemaError(f"manifest {manifest_path} missing key {key!r}")
    if manifest["format"] != DATASET_FORMAT:
        raise SchemaError(f"unknown manifest format {manifest['format']!r}")
    if manifest["version"] != DATASET_VERSION:
        raise SchemaError(f"unsupported dataset version {manifest['version']!r}")
    root = manifest_path.parent
    kind = manifest["kind"]
    if kind not in SPECTRUM_KINDS:
        raise ValidationError(f"unknown dataset kind {kind!r}")

    grids = {
        tag: load_grid(root / rel, tag) for tag, rel in manifest["ranges"].items()
    }
    labels = {rec.batch_id: rec for rec in load_labels(root / manifest["labels"])}
    background: dict[str, list[Spectrum]] = {}
    for tag, rel in manifest.get("background", {}).items():
        if tag not in grids:
            raise IntegrityError(f"background references unknown range {tag!r}")
        background[tag] = load_scans(root / rel, grids[tag], kind)

    scans: dict[tuple[str, str], list[Spectrum]] = {}
    roles: dict[str, str] = {}
    references: dict[tuple[str, str], tuple[Spectrum, Spectrum]] = {}
    seen: set[str] = set()
    for entry in manifest["batches"]:
        for key in ("batch_id", "role", "scans"):
            if key not in entry:
                raise SchemaError(f"manifest batch entry missing key {key!r}")
        batch_id = entry["batch_id"]
        if batch_id in seen:
            raise IntegrityError(f"duplicate batch {batch_id!r} in manifest")
        seen.add(batch_id)
        if batch_id not in labels:
            raise IntegrityError(f"batch {batch_id!r} has no label row")
        roles[batch_id] = entry["role"]
        for tag, rel in entry["scans"].items():
            if tag not in grids:
                raise IntegrityError(f"batch {batch_id!r} references unknown range {tag!r}")
            scans[(batch_id, tag)] = load_scans(
                root / rel, grids[tag], kind, extra_meta={"batch_id": batch_id}
            )
        for tag, pair in entry.get("references", {}).items():
            white = load_scans(root / pair["white"], grids[tag], "intensity")
            black = load_scans(root / pair["black"], grids[tag], "intensity")
            if len(white) != 1 or len(black) != 1:
                raise IntegrityError(
                    f"reference files for batch {batch_id!r} {tag} must hold one scan each"
                )
            references[(batch_id, tag)] = (white[0], black[0])

    dataset = SpectralDataset(
        kind=kind,
        grids=grids,
        scans=scans,
        labels=labels,
        roles=roles,
        references=references,
        background=background,
    )
    dataset.validate()
    return dataset
