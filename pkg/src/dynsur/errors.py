"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: ConfigError -> 2, NumericsError -> 3,
I/O failures -> 4.
"""


class DynsurError(Exception):
    """Base class for all package errors."""


class ConfigError(DynsurError):
    """Invalid configuration: bad lags, specs, sizes, missing labels."""


class DimensionError(ConfigError):
    """Incompatible array shapes (column/row mismatches)."""


class NumericsError(DynsurError):
    """Numerical failure during computation."""


class DivergenceError(NumericsError):
    """A simulation or recursive forecast blew up."""

    def __init__(self, message, step=None, label=None):
        super().__init__(message)
        self.step = step
        self.label = label


class SingularityError(NumericsError):
    """Rank-deficient or ill-conditioned regression design."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class CalibrationError(NumericsError):
    """Envelope calibration could not reproduce the target statistics."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals
