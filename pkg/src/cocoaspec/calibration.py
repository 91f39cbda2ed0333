"""Reflectance calibration against white/black references, plus band cropping.

Reflectance is (raw - black) / (white - black), clipped to [0, clip_max].
Bands where the white reference does not exceed the black one carry no
information and are masked out; masked bands are written as zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateCalibrationError,
    EmptyWindowError,
    IntegrityError,
    ValidationError,
)
from .types import INTENSITY, REFLECTANCE, Spectrum, WavelengthGrid

DEFAULT_CLIP_MAX = 1.5


@dataclass(frozen=True)
class CropWindow:
    """An inclusive wavelength window [low, high] in nanometres."""

    low: float
    high: float

    def __post_init__(self) -> None:
        if not (self.low < self.high):
            raise ValidationError("crop window must satisfy low < high")


#: Default analysis windows per range.
DEFAULT_WINDOWS = {
    "VIS": CropWindow(500.0, 800.0),
    "NIR": CropWindow(1100.0, 2000.0),
}


class CalibrationPair:
    """White and black reference scans sharing one grid.

    ``dead_bands`` flags bands where white <= black. A pair with no live
    band at all is rejected immediately.
    """

    def __init__(self, white: Spectrum, black: Spectrum):
        if white.grid != black.grid:
            raise IntegrityError("white and black references must share a grid")
        if white.kind != INTENSITY or black.kind != INTENSITY:
            raise ValidationError("calibration references must be intensity spectra")
        self.white = white
        self.black = black
        self.dead_bands = white.values <= black.values
        if bool(np.all(self.dead_bands)):
            raise DegenerateCalibrationError(
                "white reference never exceeds black; no usable band"
            )

    @property
    def grid(self) -> WavelengthGrid:
        return self.white.grid


def compute_reflectance(
    raw: Spectrum, pair: CalibrationPair, clip_max: float = DEFAULT_CLIP_MAX
) -> Spectrum:
    """Calibrate a raw intensity scan to reflectance in [0, clip_max].

    The result's mask is the union of the pair's dead bands and any mask
    already on the raw scan; masked bands are set to zero.
    """
    if raw.kind != INTENSITY:
        raise ValidationError("can only calibrate intensity spectra")
    if raw.grid != pair.grid:
        raise IntegrityError("scan grid does not match the calibration grid")
    if clip_max <= 0:
        raise ValidationError("clip_max must be positive")
    mask = pair.dead_bands.copy()
    if raw.mask is not None:
        mask |= raw.mask
    if bool(np.all(mask)):
        raise DegenerateCalibrationError("every band is masked for this scan")
    denom = pair.white.values - pair.black.values
    values = np.zeros_like(raw.values)
    live = ~mask
    values[live] = (raw.values[live] - pair.black.values[live]) / denom[live]
    np.clip(values, 0.0, clip_max, out=values)
    return Spectrum(
        raw.grid,
        values,
        kind=REFLECTANCE,
        meta=dict(raw.meta),
        mask=mask if mask.any() else None,
    )


def crop(spectrum: Spectrum, window: CropWindow) -> Spectrum:
    """Restrict a spectrum to a wavelength window (bounds inclusive)."""
    idx = spectrum.grid.window_indices(window.low, window.high)
    if idx.size == 0:
        raise EmptyWindowError(
            f"window [{window.low}, {window.high}] nm does not intersect the grid "
            f"span {spectrum.grid.span}"
        )
    grid = WavelengthGrid(spectrum.grid.values[idx], spectrum.grid.range_tag)
    mask = None if spectrum.mask is None else spectrum.mask[idx]
    return Spectrum(
        grid,
        spectrum.values[idx],
        kind=spectrum.kind,
        meta=dict(spectrum.meta),
        mask=mask,
    )


def crop_grid(grid: WavelengthGrid, window: CropWindow) -> WavelengthGrid:
    idx = grid.window_indices(window.low, window.high)
    if idx.size == 0:
        raise EmptyWindowError(
            f"window [{window.low}, {window.high}] nm does not intersect the grid "
            f"span {grid.span}"
        )
    return WavelengthGrid(grid.values[idx], grid.range_tag)


def mask_saturated(spectrum: Spectrum, ceiling: float) -> Spectrum:
    """Flag bands at or above the detector ceiling; values are kept."""
    if ceiling <= 0:
        raise ValidationError("saturation ceiling must be positive")
    saturated = spectrum.values >= ceiling
    if spectrum.mask is not None:
        saturated = saturated | spectrum.mask
    return Spectrum(
        spectrum.grid,
        spectrum.values,
        kind=spectrum.kind,
        meta=dict(spectrum.meta),
        mask=saturated if saturated.any() else None,
    )
