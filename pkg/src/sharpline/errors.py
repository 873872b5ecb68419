"""Exception types shared across the package."""


class SharplineError(Exception):
    pass


class NonFiniteValueError(SharplineError):
    """A NaN/Inf showed up in an activation, loss, or gradient."""


class ZeroDirectionError(SharplineError):
    """An operation that needs a nonzero direction got the zero vector."""


class DegenerateDenominatorError(SharplineError):
    """Directional sharpness denominator is numerically zero."""


class UnsupportedOptimizerError(SharplineError):
    """Operation requires an adaptive optimizer (adam/adamw)."""


class NoBoundaryError(SharplineError):
    """Bisection endpoints have the same diverged/converged verdict."""


class ConfigError(SharplineError):
    """Bad or unknown key in an experiment config file."""


class DatasetParseError(SharplineError):
    """Malformed dataset file; message carries line/offset info."""
