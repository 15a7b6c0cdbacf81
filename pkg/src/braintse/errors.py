"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class BrainTSEError(Exception):
    """Base class for all package errors."""


class ConfigError(BrainTSEError):
    """Invalid or inconsistent configuration."""


class DataError(BrainTSEError):
    """Malformed input data or files (layouts, trials, manifests)."""


class LayoutError(DataError):
    """Electrode layout specific parse or invariant failure."""


class NumericalError(BrainTSEError):
    """Non-finite values or other numerical failures during computation."""
