"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to.
"""


class DecnnError(Exception):
    exit_code = 1


class ShapeError(DecnnError, ValueError):
    exit_code = 5


class ConfigError(DecnnError, ValueError):
    exit_code = 5


class ParameterError(DecnnError, ValueError):
    exit_code = 5


class StateError(DecnnError, RuntimeError):
    exit_code = 5


class GeometryError(DecnnError, ValueError):
    exit_code = 5


class DataError(DecnnError, ValueError):
    exit_code = 5


class DegenerateRangeError(DecnnError, ValueError):
    exit_code = 5


class FormatError(DecnnError, ValueError):
    """Malformed binary file. ``offset`` is the byte position where parsing failed."""

    exit_code = 4

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class InfinitePSNR(DecnnError, ArithmeticError):
    """Raised by psnr() when prediction and truth are identical."""
