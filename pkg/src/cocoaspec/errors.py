"""Exception hierarchy for the cocoaspec package.

Every error raised by this package derives from :class:`CocoaSpecError`,
so callers can catch one base class at pipeline boundaries.  The CLI maps
subtrees of this hierarchy onto process exit codes: configuration and
usage problems exit 1, data integrity problems exit 2, and training
divergence exits 3.
"""


class CocoaSpecError(Exception):
    """Base class for all package errors."""


class ConfigError(CocoaSpecError):
    """Invalid or unusable configuration (bad field, missing path, bad stage order)."""


class DataError(CocoaSpecError):
    """Base class for problems with data content or shape."""


class ParseError(DataError):
    """A file could not be parsed into the expected records."""


class SchemaError(DataError):
    """A table or manifest is missing required columns or keys."""


class DimensionError(DataError):
    """Array shapes or grid lengths do not line up."""


class ValidationError(DataError):
    """A value violates a declared invariant (range, sign, ordering)."""


class DomainError(DataError):
    """Arguments outside the mathematical domain of an operation."""


class IntegrityError(DataError):
    """Cross-file or cross-record references are broken (missing labels, files, ids)."""


class DegenerateCalibrationError(DataError):
    """All bands are unusable because the white reference never exceeds the black."""


class EmptyWindowError(DataError):
    """A crop window does not intersect the wavelength grid."""


class DegenerateSpectrumError(DataError):
    """A spectrum has zero norm where a direction is required (SAM)."""


class ConstantTargetError(DataError):
    """A target column is constant, so min-max normalization is undefined."""


class RankError(DataError):
    """Requested more principal components than the data can support."""


class ZeroVarianceError(DataError):
    """Data has no variance at all; principal directions are undefined."""


class FoldError(ConfigError):
    """Cross-validation folds cannot be formed (too few rows for the fold count)."""


class TrainingDivergenceError(CocoaSpecError):
    """Network training produced a non-finite loss."""
