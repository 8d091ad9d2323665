"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data errors
exit 2, anything else exits 3.
"""


class RadiomapError(Exception):
    """Base class for all package errors."""


class UsageError(RadiomapError):
    """Invalid argument or configuration supplied by the caller."""


class DataError(RadiomapError):
    """Input data violates a precondition (empty mask, single class, ...)."""


class FormatError(DataError):
    """A file could not be parsed.

    Carries the byte offset at which parsing failed when known.
    """

    def __init__(self, message, byte_offset=None):
        if byte_offset is not None:
            message = f"{message} (at byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class UnsupportedEncodingError(DataError):
    """The file is valid but uses an encoding this reader refuses to guess at."""


class EmptyMaskError(DataError):
    """An operation requiring foreground voxels received an empty mask."""


class ConvergenceError(RadiomapError):
    """An iterative solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message, gap=None):
        if gap is not None:
            message = f"{message} (final duality gap {gap:.3e})"
        super().__init__(message)
        self.gap = gap


class StratificationError(DataError):
    """Cross-validation folds could not be built with both classes present."""
