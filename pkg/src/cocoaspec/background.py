"""Background rejection with the spectral angle mapper (SAM).

The angle between two spectra treats them as directions, so it is
insensitive to illumination scale. Scans that point nearly the same way
as a known conveyor-belt spectrum are background; scans at a wide angle
from every belt reference are beans. Filtering runs on raw intensity
scans, before calibration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSpectrumError, DimensionError, ValidationError
from .types import Spectrum

MODE_THRESHOLD = "threshold"
MODE_TOP_N = "top_n"
MODE_THRESHOLD_THEN_TOP_N = "threshold_then_top_n"
FILTER_MODES = (MODE_THRESHOLD, MODE_TOP_N, MODE_THRESHOLD_THEN_TOP_N)

DEFAULT_TAU = 0.25


def _direction(spectrum: Spectrum | np.ndarray) -> np.ndarray:
    values = spectrum.values if isinstance(spectrum, Spectrum) else np.asarray(
        spectrum, dtype=np.float64
    )
    if values.ndim != 1:
        raise DimensionError("spectral angle needs 1-d inputs")
    return values


def sam_angle(a: Spectrum | np.ndarray, b: Spectrum | np.ndarray) -> float:
    """Spectral angle between two spectra, in radians in [0, pi].

    arccos of the normalized inner product; the cosine is clamped to
    [-1, 1] so collinear inputs cannot produce NaN from rounding.
    """
    va, vb = _direction(a), _direction(b)
    if va.shape != vb.shape:
        raise DimensionError("spectra must have the same number of bands")
    na, nb = float(np.linalg.norm(va)), float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise DegenerateSpectrumError("spectral angle undefined for a zero spectrum")
    cos = float(np.dot(va, vb)) / (na * nb)
    return float(np.arccos(min(1.0, max(-1.0, cos))))


class ReferenceSet:
    """One or more known background spectra sharing a grid."""

    def __init__(self, references: list[Spectrum]):
        if not references:
            raise ValidationError("reference set must not be empty")
        grid = references[0].grid
        for ref in references[1:]:
            if ref.grid != grid:
                raise DimensionError("reference spectra must share one grid")
        self._matrix = np.stack([r.values for r in references])
        norms = np.linalg.norm(self._matrix, axis=1)
        if np.any(norms == 0.0):
            raise DegenerateSpectrumError("reference set contains a zero spectrum")
        self._unit = self._matrix / norms[:, None]
        self.references = list(references)
        self.grid = grid

    def __len__(self) -> int:
        return len(self.references)

    def angles(self, spectra: list[Spectrum]) -> np.ndarray:
        """Min angle to any reference, one value per scan."""
        if not spectra:
            return np.zeros(0)
        for spec in spectra:
            if spec.grid != self.grid:
                raise DimensionError("scan grid does not match the reference grid")
        matrix = np.stack([s.values for s in spectra])
        norms = np.linalg.norm(matrix, axis=1)
        if np.any(norms == 0.0):
            raise DegenerateSpectrumError("cannot take the angle of a zero spectrum")
        cos = (matrix / norms[:, None]) @ self._unit.T
        np.clip(cos, -1.0, 1.0, out=cos)
        return np.arccos(cos).min(axis=1)


def distance_to_background(spectrum: Spectrum, references: ReferenceSet) -> float:
    """Smallest spectral angle between a scan and any background reference."""
    return float(references.angles([spectrum])[0])


@dataclass(frozen=True)
class FilterPolicy:
    """How to decide which scans to keep.

    threshold        keep scans with distance >= tau
    top_n            keep the n scans farthest from the background
    threshold_then_top_n   apply the threshold, then cap at n
    """

    mode: str = MODE_TOP_N
    tau: float = DEFAULT_TAU
    n: int = 1000

    def __post_init__(self) -> None:
        if self.mode not in FILTER_MODES:
            raise ValidationError(f"unknown filter mode {self.mode!r}")
        if self.mode != MODE_TOP_N and self.tau <= 0:
            raise ValidationError("filter tau must be positive")
        if self.mode != MODE_THRESHOLD and self.n < 1:
            raise ValidationError("filter n must be at least 1")


@dataclass
class FilterResult:
    kept: list[Spectrum]
    discarded: list[Spectrum]
    distances: np.ndarray
    kept_flags: np.ndarray
    warnings: list[str] = field(default_factory=list)


def _top_n_flags(distances: np.ndarray, n: int, eligible: np.ndarray) -> np.ndarray:
    """Flags for the n largest eligible distances; ties go to lower index."""
    idx = np.nonzero(eligible)[0]
    order = np.lexsort((idx, -distances[idx]))
    flags = np.zeros(distances.size, dtype=bool)
    flags[idx[order[:n]]] = True
    return flags


def filter_spectra(
    spectra: list[Spectrum], references: ReferenceSet, policy: FilterPolicy
) -> FilterResult:
    """Split scans into kept (bean) and discarded (background) groups.

    Input order is preserved in both groups, every scan lands in exactly
    one group, and the returned distances line up with the input order.
    """
    distances = references.angles(spectra)
    warnings: list[str] = []
    if policy.mode == MODE_THRESHOLD:
        flags = distances >= policy.tau
    else:
        if policy.mode == MODE_THRESHOLD_THEN_TOP_N:
            eligible = distances >= policy.tau
        else:
            eligible = np.ones(distances.size, dtype=bool)
        n_eligible = int(eligible.sum())
        if policy.n >= n_eligible:
            flags = eligible
            if policy.n > n_eligible:
                warnings.append(
                    f"requested top {policy.n} scans but only {n_eligible} eligible; "
                    "keeping all of them"
                )
        else:
            flags = _top_n_flags(distances, policy.n, eligible)
    kept = [s for s, f in zip(spectra, flags) if f]
    discarded = [s for s, f in zip(spectra, flags) if not f]
    return FilterResult(
        kept=kept,
        discarded=discarded,
        distances=distances,
        kept_flags=flags,
        warnings=warnings,
    )
