"""Exception hierarchy shared across the package."""


class CalibrationError(Exception):
    """Base class for calibration failures."""


class UnphysicalEstimateError(CalibrationError):
    """A squared scale factor came out non-positive."""


class SingularDesignError(CalibrationError):
    """The observation matrix is rank deficient or badly conditioned."""


class ConvergenceError(CalibrationError):
    """An iterative solver hit its iteration cap.

    The last iterate is kept on ``result`` for diagnostics.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class SegmentationError(CalibrationError):
    """A sample log could not be split into one segment per protocol step."""


class LogFormatError(ValueError):
    """A sample log or sidecar file is malformed."""


class ConfigError(ValueError):
    """A run configuration has unknown keys or invalid values."""
