"""Synthetic spectrometer corpus with known ground truth.

Bean reflectance prototypes are Gaussian-band mixtures whose band
amplitudes depend monotonically on the batch's physicochemical labels,
each property driving its own band, so a regressor that reads band
heights can recover every label. The conveyor belt is spectrally flat
and therefore sits at a wide spectral angle from any bean scan.

Scans are emitted as raw intensity via I = black + R * (white - black);
with the default references white - black is a power of two, so the
calibration stage recovers R to within one float64 rounding step, and
the stored 9-significant-digit text dominates the round-trip error
(~1e-9). Noise is added in the reflectance domain.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .io import ROLE_REGION, ROLE_TRAIN, SpectralDataset, save_dataset
from .types import INTENSITY, NIR, PROPERTIES, VIS, BatchRecord, Spectrum, WavelengthGrid


@dataclass(frozen=True)
class GaussianBand:
    center: float
    width: float
    amplitude: float


@dataclass(frozen=True)
class PropertyLink:
    """Affine map from one property's value to one band's amplitude."""

    property_name: str
    center: float
    width: float
    low: float
    high: float
    gain_low: float
    gain_high: float

    def amplitude(self, value: float) -> float:
        frac = (value - self.low) / (self.high - self.low)
        return self.gain_low + frac * (self.gain_high - self.gain_low)


@dataclass(frozen=True)
class SynthProfile:
    """Everything needed to draw one spectral range of the corpus."""

    range_tag: str
    grid_low: float
    grid_high: float
    n_bands: int
    base_level: float
    base_bands: tuple[GaussianBand, ...]
    links: tuple[PropertyLink, ...]
    belt_level: float
    white_level: float
    black_level: float
    noise_sd: float

    def __post_init__(self) -> None:
        if self.n_bands < 4:
            raise ValidationError("profile needs at least 4 bands")
        if self.white_level <= self.black_level:
            raise ValidationError("white level must exceed black level")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be non-negative")
        names = [link.property_name for link in self.links]
        for name in names:
            if name not in PROPERTIES:
                raise ValidationError(f"unknown property {name!r} in profile link")

    def grid(self) -> WavelengthGrid:
        return WavelengthGrid(
            np.linspace(self.grid_low, self.grid_high, self.n_bands), self.range_tag
        )

    def bean_reflectance(self, record: BatchRecord) -> np.ndarray:
        """Noise-free reflectance prototype for one batch, in [0, 1]."""
        wl = self.grid().values
        r = np.full(wl.shape, self.base_level)
        for band in self.base_bands:
            r += band.amplitude * np.exp(-((wl - band.center) ** 2) / (2 * band.width**2))
        values = dict(zip(PROPERTIES, record.targets()))
        for link in self.links:
            amp = link.amplitude(values[link.property_name])
            r += amp * np.exp(-((wl - link.center) ** 2) / (2 * link.width**2))
        return np.clip(r, 0.0, 1.0)

    def belt_reflectance(self) -> np.ndarray:
        return np.full(self.n_bands, self.belt_level)

    def to_intensity(self, reflectance: np.ndarray) -> np.ndarray:
        return self.black_level + reflectance * (self.white_level - self.black_level)

    def references(self) -> tuple[Spectrum, Spectrum]:
        grid = self.grid()
        white = Spectrum(grid, np.full(self.n_bands, self.white_level), INTENSITY)
        black = Spectrum(grid, np.full(self.n_bands, self.black_level), INTENSITY)
        return white, black


def default_profiles(
    vis_bands: int = 256, nir_bands: int = 320, noise_sd: float = 0.01
) -> dict[str, SynthProfile]:
    """One profile per range; property bands sit inside the crop windows."""
    vis = SynthProfile(
        range_tag=VIS,
        grid_low=400.0,
        grid_high=900.0,
        n_bands=vis_bands,
        base_level=0.10,
        base_bands=(GaussianBand(660.0, 160.0, 0.12),),
        links=(
            PropertyLink("fermentation", 540.0, 18.0, 0.0, 1.0, 0.02, 0.16),
            PropertyLink("moisture", 610.0, 16.0, 3.0, 9.0, 0.02, 0.15),
            PropertyLink("cadmium", 680.0, 15.0, 0.0, 6.0, 0.02, 0.14),
            PropertyLink("polyphenols", 760.0, 18.0, 15.0, 45.0, 0.02, 0.16),
        ),
        belt_level=0.35,
        white_level=96.0,
        black_level=32.0,
        noise_sd=noise_sd,
    )
    nir = SynthProfile(
        range_tag=NIR,
        grid_low=950.0,
        grid_high=2150.0,
        n_bands=nir_bands,
        base_level=0.12,
        base_bands=(GaussianBand(1550.0, 420.0, 0.10),),
        links=(
            PropertyLink("fermentation", 1200.0, 40.0, 0.0, 1.0, 0.02, 0.16),
            PropertyLink("moisture", 1440.0, 36.0, 3.0, 9.0, 0.02, 0.16),
            PropertyLink("cadmium", 1700.0, 38.0, 0.0, 6.0, 0.02, 0.14),
            PropertyLink("polyphenols", 1930.0, 40.0, 15.0, 45.0, 0.02, 0.16),
        ),
        belt_level=0.35,
        white_level=96.0,
        black_level=32.0,
        noise_sd=noise_sd,
    )
    return {VIS: vis, NIR: nir}


def _rec(
    batch_id: str,
    date: str,
    region: str,
    country: str,
    ferm_pct: float,
    moisture: float,
    cadmium: float,
    polyphenols: float,
    hours: float | None,
    censored: bool = False,
) -> BatchRecord:
    return BatchRecord(
        batch_id=batch_id,
        date=dt.datetime.strptime(date, "%d/%m/%Y").date(),
        region=region,
        country=country,
        fermentation=ferm_pct / 100.0,
        moisture=moisture,
        cadmium=cadmium,
        polyphenols=polyphenols,
        fermentation_hours=hours,
        cadmium_below_detection=censored,
    )


def training_batch_labels() -> list[BatchRecord]:
    """The twenty shipped batches: five receipt dates, four batches each.

    Cadmium below the 0.09 mg/kg assay limit is stored at the limit with
    the censoring flag set.
    """
    rows = [
        ("1", "15/04/2024", 60, 5.12, 2.14, 41.30, 96, False),
        ("2", "15/04/2024", 66, 4.93, 1.29, 34.24, 144, False),
        ("3", "15/04/2024", 84, 4.80, 1.25, 40.38, 264, False),
        ("4", "15/04/2024", 92, 4.75, 1.23, 39.81, 264, False),
        ("5", "27/06/2024", 73, 4.79, 2.57, 32.85, 144, False),
        ("6", "27/06/2024", 85, 4.94, 1.69, 39.75, 110, False),
        ("7", "27/06/2024", 94, 4.56, 2.19, 28.78, 216, False),
        ("8", "27/06/2024", 96, 5.09, 1.73, 23.74, 252, False),
        ("9", "22/10/2024", 66, 5.82, 5.55, 27.66, 96, False),
        ("10", "22/10/2024", 94, 5.68, 4.80, 23.05, 144, False),
        ("11", "22/10/2024", 96, 5.67, 3.65, 25.09, 216, False),
        ("12", "22/10/2024", 100, 5.67, 3.14, 22.76, 252, False),
        ("13", "22/11/2024", 30, 6.68, 0.09, 35.41, 30, True),
        ("14", "22/11/2024", 45, 6.60, 0.09, 37.29, 45, True),
        ("15", "22/11/2024", 70, 6.87, 0.09, 36.48, 70, True),
        ("16", "22/11/2024", 70, 8.44, 0.09, 25.90, 70, True),
        ("17", "18/01/2025", 44, 4.78, 2.65, 39.16, 30, False),
        ("18", "18/01/2025", 70, 4.88, 2.72, 16.69, 45, False),
        ("19", "18/01/2025", 87, 5.01, 2.24, 35.77, 70, False),
        ("20", "18/01/2025", 96, 4.16, 1.70, 37.00, 70, False),
    ]
    region = "Santander"
    country = "Colombia"
    return [
        _rec(b, d, region, country, f, m, cd, pp, h, cen)
        for (b, d, f, m, cd, pp, h, cen) in rows
    ]


def region_batch_labels() -> list[BatchRecord]:
    """Four single-origin batches used only for the region report."""
    return [
        _rec("santander", "01/06/2025", "Santander", "Colombia", 96, 4.16, 1.70, 37.00, None),
        _rec("huila", "06/06/2025", "Huila", "Colombia", 60, 5.02, 0.84, 35.21, None),
        _rec(
            "putumayo", "10/06/2025", "Putumayo", "Colombia", 96, 5.02, 0.09, 28.80,
            None, censored=True,
        ),
        _rec("cusco", "12/06/2025", "Cusco", "Peru", 100, 5.36, 2.52, 33.94, None),
    ]


@dataclass
class CorpusSpec:
    """Knobs for corpus generation; profiles default to both ranges."""

    n_scans: int = 200
    belt_fraction: float = 0.3
    seed: int = 0
    profiles: dict[str, SynthProfile] = field(default_factory=default_profiles)
    n_background_refs: int = 2

    def __post_init__(self) -> None:
        if self.n_scans < 2:
            raise ValidationError("need at least 2 scans per batch")
        if not (0.0 <= self.belt_fraction < 1.0):
            raise ValidationError("belt_fraction must be in [0, 1)")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")
        if self.n_background_refs < 1:
            raise ValidationError("need at least one background reference")


def _scan_rng(seed: int, batch_id: str, range_tag: str) -> np.random.Generator:
    import hashlib

    key = hashlib.sha256(f"{batch_id}/{range_tag}".encode()).digest()
    words = [seed, int.from_bytes(key[:8], "big")]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


def generate_batch(
    profile: SynthProfile,
    record: BatchRecord,
    n_scans: int,
    belt_fraction: float,
    seed: int,
) -> list[Spectrum]:
    """Raw intensity scans for one batch: beans plus interleaved belt hits.

    The number of belt scans is exactly round(belt_fraction * n_scans);
    each scan's meta carries its source so tests can check the filter.
    """
    rng = _scan_rng(seed, record.batch_id, profile.range_tag)
    grid = profile.grid()
    n_belt = int(round(belt_fraction * n_scans))
    positions = rng.permutation(n_scans)
    belt_at = set(int(i) for i in positions[:n_belt])
    bean_proto = profile.bean_reflectance(record)
    belt_proto = profile.belt_reflectance()
    scans = []
    for i in range(n_scans):
        proto = belt_proto if i in belt_at else bean_proto
        noisy = proto + rng.normal(0.0, profile.noise_sd, proto.size)
        reflectance = np.clip(noisy, 0.0, 1.4)
        scans.append(
            Spectrum(
                grid,
                profile.to_intensity(reflectance),
                INTENSITY,
                meta={
                    "scan_index": i,
                    "batch_id": record.batch_id,
                    "source": "belt" if i in belt_at else "bean",
                },
            )
        )
    return scans


def background_references(profile: SynthProfile, count: int) -> list[Spectrum]:
    """Noise-free belt intensity spectra, slightly tilted apart."""
    grid = profile.grid()
    out = []
    for i in range(count):
        tilt = np.linspace(-0.01 * i, 0.01 * i, profile.n_bands)
        reflectance = np.clip(profile.belt_reflectance() + tilt, 0.01, 1.4)
        out.append(
            Spectrum(
                grid,
                profile.to_intensity(reflectance),
                INTENSITY,
                meta={"scan_index": i, "source": "belt_reference"},
            )
        )
    return out


def generate_corpus(spec: CorpusSpec) -> SpectralDataset:
    """Build the full in-memory corpus: 20 training + 4 region batches."""
    train = training_batch_labels()
    regions = region_batch_labels()
    labels = {rec.batch_id: rec for rec in train + regions}
    roles = {rec.batch_id: ROLE_TRAIN for rec in train}
    roles.update({rec.batch_id: ROLE_REGION for rec in regions})
    grids = {tag: profile.grid() for tag, profile in spec.profiles.items()}
    scans: dict[tuple[str, str], list[Spectrum]] = {}
    references: dict[tuple[str, str], tuple[Spectrum, Spectrum]] = {}
    background: dict[str, list[Spectrum]] = {}
    for tag, profile in spec.profiles.items():
        background[tag] = background_references(profile, spec.n_background_refs)
    for rec in train + regions:
        for tag, profile in spec.profiles.items():
            scans[(rec.batch_id, tag)] = generate_batch(
                profile, rec, spec.n_scans, spec.belt_fraction, spec.seed
            )
            references[(rec.batch_id, tag)] = profile.references()
    return SpectralDataset(
        kind=INTENSITY,
        grids=grids,
        scans=scans,
        labels=labels,
        roles=roles,
        references=references,
        background=background,
    )


def write_corpus(spec: CorpusSpec, root: str | Path) -> Path:
    """Generate and persist a corpus; returns the manifest path."""
    dataset = generate_corpus(spec)
    manifest = save_dataset(dataset, root)
    profile_doc = {
        tag: asdict(profile) for tag, profile in spec.profiles.items()
    }
    doc = {
        "n_scans": spec.n_scans,
        "belt_fraction": spec.belt_fraction,
        "seed": spec.seed,
        "profiles": profile_doc,
    }
    (Path(root) / "synth_spec.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n"
    )
    return manifest
