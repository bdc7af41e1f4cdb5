"""Exception taxonomy shared across the library.

The CLI maps these onto exit codes: configuration and dimension problems
are usage errors (2), file/format problems are data errors (3), and
non-finite numerics are numeric errors (4).
"""


class WalkconvError(Exception):
    """Base class for all errors raised by this library."""


class DimensionError(WalkconvError):
    """Array shapes or sizes are inconsistent with the operation."""


class ConfigurationError(WalkconvError):
    """Options are invalid or incompatible with each other."""


class DataFormatError(WalkconvError):
    """A file could not be parsed (IDX, CSV, neighbor table, checkpoint)."""


class NumericError(WalkconvError):
    """A computation produced non-finite values or failed to proceed."""
