"""Exception hierarchy.

Every failure caused by input data derives from SarcoastError; the CLI maps
those to exit status 2 and UsageError to exit status 1.
"""


class UsageError(Exception):
    """Bad command line: unknown flag, missing argument, unknown subcommand."""


class SarcoastError(Exception):
    """Base class for data errors."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class MissingFileError(SarcoastError):
    pass


class FormatError(SarcoastError):
    """Malformed header, truncated payload, bad maxval or channel count."""


class PathOrderError(FormatError):
    """Primary-axis indices of a coastline are not strictly increasing."""


class CoordinateRangeError(SarcoastError):
    pass


class DimensionError(SarcoastError):
    pass


class CropTooLargeError(DimensionError):
    pass


class DonorTooSmallError(DimensionError):
    pass


class ChannelMismatchError(SarcoastError):
    pass


class BackendError(SarcoastError):
    pass


class MissingPredictionError(BackendError):
    pass


class OrientationMismatchError(SarcoastError):
    pass


class WeightError(SarcoastError):
    pass


class EmptyPointsError(SarcoastError):
    pass


class DegenerateCurveError(SarcoastError):
    pass


class ConfigError(SarcoastError):
    pass
