"""Exception types shared across the package."""


class CfSpectralError(Exception):
    """Base class for all package-specific errors."""


class DegenerateMatrix(CfSpectralError):
    """A matrix operation received an empty or all-zero matrix."""


class ConvergenceFailure(CfSpectralError):
    """Power iteration did not converge; carries the last iterate."""

    def __init__(self, message, last_sigma=None, last_vec=None):
        super().__init__(message)
        self.last_sigma = last_sigma
        self.last_vec = last_vec


class OracleSizeExceeded(CfSpectralError):
    """The dense SVD oracle was asked for a matrix larger than it supports."""


class ParseError(CfSpectralError):
    """An interaction file contained a malformed line."""

    def __init__(self, message, line_number):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class SplitError(CfSpectralError):
    """The dataset is too small to produce nonempty train/val/test splits."""


class ConfigError(CfSpectralError):
    """A configuration value is outside its legal range."""


class NumericError(CfSpectralError):
    """A non-finite value appeared where finite arithmetic is required."""


class DegenerateBatch(CfSpectralError):
    """A batch-level loss term needs more distinct rows than it was given."""


class UndefinedAngle(CfSpectralError):
    """A gradient angle is undefined because one gradient vanishes."""


class EvalError(CfSpectralError):
    """Ranking evaluation was requested on an empty split."""
