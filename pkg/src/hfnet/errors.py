"""Exception types shared across the package."""


class HfnetError(Exception):
    """Base class for all package-specific errors."""


class VolumeFormatError(HfnetError):
    """File is not a readable NIfTI-1 volume (bad magic, bad header)."""


class UnsupportedDtypeError(VolumeFormatError):
    """NIfTI datatype code outside the supported {u8, i16, f32} subset."""


class CorruptFileError(HfnetError):
    """File payload is truncated or inconsistent with its header."""


class GeometryError(HfnetError):
    """Singular or otherwise unusable spatial transform."""


class ShapeError(HfnetError):
    """Array/volume shapes do not agree with the operation's contract."""


class ConfigError(HfnetError):
    """Invalid configuration value (fractions, probabilities, modes...)."""


class DataError(HfnetError):
    """Input data violates a precondition (empty split, missing class...)."""


class MissingLabelsError(DataError):
    """ROI mode requires a segmentation volume that was not provided."""


class DegenerateInputError(DataError):
    """Input has no usable variation (e.g. constant volume for zscore)."""


class LabelError(DataError):
    """Malformed class labels (non one-hot rows, unknown class names)."""


class UndefinedMetricError(DataError):
    """Metric is undefined for the given inputs (e.g. single-class AUC)."""


class DivergenceError(HfnetError):
    """Training produced a non-finite loss."""
