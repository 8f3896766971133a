"""Exception taxonomy shared by all modules.

The CLI maps these onto exit codes: configuration problems exit 2,
numerical failures exit 3, file/format problems exit 4.
"""


class MaskGridError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(MaskGridError):
    """Invalid configuration, scene spec, or inconsistent user input."""


class ShapeError(ConfigError):
    """Array dimensions of two inputs do not match."""


class FormatError(MaskGridError):
    """Malformed file content (bad header, truncated payload)."""


class UnsupportedFormatError(FormatError):
    """File parsed correctly but uses an encoding we do not handle."""


class DegenerateInputError(MaskGridError):
    """Operation undefined for this input (all-zero signal, empty reference)."""


class CollisionError(MaskGridError):
    """Two speakers snap to the same grid cell; the grid is too coarse."""


class NumericError(MaskGridError):
    """Numerical failure: singular matrix, non-finite loss, divergence."""


class TrainingError(NumericError):
    """Training diverged; carries the epoch index in the message."""
