"""Exception hierarchy.

Two roots map to CLI exit codes: ``ValidationError`` (bad configuration or
arguments, exit 1) and ``DataError`` (bad input data, exit 2).
"""

from __future__ import annotations


class SongsieveError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SongsieveError, ValueError):
    pass


class DataError(SongsieveError, ValueError):
    """Input data violates a format or invariant.

    ``source`` and ``line`` carry file/line context when known.
    """

    def __init__(self, message: str, *, source: str | None = None, line: int | None = None):
        self.source = source
        self.line = line
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


# audio_io
class MalformedHeader(DataError):
    pass


class UnsupportedEncoding(DataError):
    pass


class EmptyAudio(DataError):
    pass


class BurstOutOfRange(DataError):
    pass


# spectrogram / detect
class ClipTooShort(DataError):
    pass


# annotations / detect
class MalformedRow(DataError):
    pass


class DanglingFrequencyRow(DataError):
    pass


class UnknownLabel(DataError):
    pass


class OutOfRange(DataError):
    pass


class CoordinateOutOfRange(DataError):
    pass


class ConfidenceOutOfRange(DataError):
    pass


# split
class EmptyInput(DataError):
    pass


# augment
class SilentClip(DataError):
    pass


class InsufficientBackgroundItems(DataError):
    pass


# evaluate
class DurationUnknown(DataError):
    pass


class DivisionByZero(DataError, ZeroDivisionError):
    pass


class NoAnnotations(DataError):
    pass


class UnknownClass(DataError):
    pass


# calibrate
class DegenerateData(DataError):
    pass


class NonMonotoneModel(DataError):
    pass
