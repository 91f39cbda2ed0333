"""Core value types: wavelength grids, spectra, and batch label records."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ValidationError

VIS = "VIS"
NIR = "NIR"
RANGE_TAGS = (VIS, NIR)

INTENSITY = "intensity"
REFLECTANCE = "reflectance"
SPECTRUM_KINDS = (INTENSITY, REFLECTANCE)

#: Property order used everywhere a 4-column target matrix appears.
PROPERTIES = ("fermentation", "moisture", "cadmium", "polyphenols")

#: Display units per property. Fermentation is stored as a fraction and
#: rendered as a percentage (value * 100) in reports.
PROPERTY_UNITS = {
    "fermentation": "%",
    "moisture": "%",
    "cadmium": "mg/kg",
    "polyphenols": "mg/g",
}


@dataclass(frozen=True, eq=False)
class WavelengthGrid:
    """A strictly increasing grid of positive wavelengths, in nanometres."""

    values: np.ndarray
    range_tag: str

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise DimensionError("wavelength grid must be a non-empty 1-d array")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ValidationError("wavelengths must be finite and positive")
        if np.any(np.diff(values) <= 0):
            raise ValidationError("wavelengths must be strictly increasing")
        if self.range_tag not in RANGE_TAGS:
            raise ValidationError(f"unknown range tag {self.range_tag!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WavelengthGrid):
            return NotImplemented
        return self.range_tag == other.range_tag and np.array_equal(
            self.values, other.values
        )

    @property
    def span(self) -> tuple[float, float]:
        return float(self.values[0]), float(self.values[-1])

    def window_indices(self, low: float, high: float) -> np.ndarray:
        """Indices of grid points inside [low, high], bounds inclusive."""
        return np.nonzero((self.values >= low) & (self.values <= high))[0]


@dataclass(eq=False)
class Spectrum:
    """One scan: values on a grid, plus an optional per-band validity mask.

    ``mask`` marks bands to ignore (True = excluded); it is None when every
    band is usable. ``meta`` carries provenance such as scan index, batch id
    and source, and is never interpreted by numeric code.
    """

    grid: WavelengthGrid
    values: np.ndarray
    kind: str = INTENSITY
    meta: dict = field(default_factory=dict)
    mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise DimensionError("spectrum values must be 1-d")
        if values.size != len(self.grid):
            raise DimensionError(
                f"spectrum has {values.size} values but grid has {len(self.grid)} bands"
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError("spectrum values must be finite")
        if np.any(values < 0):
            raise ValidationError("spectrum values must be non-negative")
        self.values = values
        if self.kind not in SPECTRUM_KINDS:
            raise ValidationError(f"unknown spectrum kind {self.kind!r}")
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != values.shape:
                raise DimensionError("mask shape must match values shape")
            self.mask = mask

    def __len__(self) -> int:
        return int(self.values.size)

    def good_bands(self) -> np.ndarray:
        """Boolean array, True where the band is usable."""
        if self.mask is None:
            return np.ones(len(self), dtype=bool)
        return ~self.mask


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValidationError(message)


@dataclass(frozen=True)
class BatchRecord:
    """Ground-truth labels for one bean batch.

    ``fermentation`` is a fraction in [0, 1] (reports render it as percent).
    ``cadmium_below_detection`` marks values recorded below the assay limit;
    such values are stored at the limit itself.
    """

    batch_id: str
    date: dt.date
    region: str
    country: str
    fermentation: float
    moisture: float
    cadmium: float
    polyphenols: float
    fermentation_hours: float | None = None

    cadmium_below_detection: bool = False

    def __post_init__(self) -> None:
        _require(bool(self.batch_id), "batch_id must be non-empty")
        _require(0.0 <= self.fermentation <= 1.0, "fermentation must be in [0, 1]")
        _require(0.0 < self.moisture < 100.0, "moisture % must be in (0, 100)")
        _require(self.cadmium >= 0.0, "cadmium must be non-negative")
        _require(self.polyphenols >= 0.0, "polyphenols must be non-negative")
        if self.fermentation_hours is not None:
            _require(self.fermentation_hours >= 0.0, "fermentation hours must be >= 0")

    def targets(self) -> np.ndarray:
        """Targets in internal units, ordered as :data:`PROPERTIES`."""
        return np.array(
            [self.fermentation, self.moisture, self.cadmium, self.polyphenols],
            dtype=np.float64,
        )
