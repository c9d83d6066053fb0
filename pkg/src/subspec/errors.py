"""Exception hierarchy.

The CLI maps each family onto an exit code: configuration problems exit 1,
data problems exit 2, numeric failures exit 3.
"""


class SubspecError(Exception):
    exit_code = 1


class ConfigError(SubspecError):
    exit_code = 1


class DataError(SubspecError):
    exit_code = 2


class WavFormatError(DataError):
    pass


class UnsupportedFormatError(WavFormatError):
    pass


class TruncatedDataError(WavFormatError):
    pass


class ManifestError(DataError):
    pass


class EmptyDatasetError(ManifestError):
    pass


class SampleRateError(DataError):
    pass


class ShapeError(SubspecError, ValueError):
    exit_code = 3


class WindowRangeError(ShapeError):
    pass


class BandError(ConfigError, ValueError):
    pass


class DegenerateBandError(BandError):
    def __init__(self, message, filters=()):
        super().__init__(message)
        self.filters = tuple(filters)


class StatsError(DataError):
    pass


class LabelError(SubspecError, ValueError):
    exit_code = 3


class StateError(SubspecError, RuntimeError):
    exit_code = 3


class NumericError(SubspecError, ArithmeticError):
    exit_code = 3


class SearchError(DataError):
    pass


class MetricError(DataError):
    pass
