"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes, so raising the right class
matters: bad user input/config -> ConfigError or InputError, unreadable or
malformed files -> DataFormatError, numerical breakdown (quadrature that
cannot reach tolerance, non-finite gradients) -> NumericError.
"""


class NpsymError(Exception):
    """Base class for all package errors."""


class InputError(NpsymError):
    """Invalid argument or malformed in-memory structure (bad table, bad map)."""


class ConfigError(NpsymError):
    """Invalid experiment configuration (unknown keys, out-of-range values)."""


class DataFormatError(NpsymError):
    """File exists but does not parse as the expected format/version."""


class NumericError(NpsymError):
    """A numerical routine failed to meet its contract.

    ``achieved`` is the tolerance actually reached, ``indices`` the positions
    of the offending inputs (semantics set by whoever raised: point or cloud
    indices), when known.
    """

    def __init__(self, message, achieved=None, indices=None):
        super().__init__(message)
        self.achieved = achieved
        self.indices = None if indices is None else tuple(indices)
