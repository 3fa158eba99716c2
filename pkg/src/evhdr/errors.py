"""Exception types raised across the toolkit.

Every error derives from :class:`EvhdrError` so callers (the CLI in
particular) can separate toolkit failures from programming errors.
Errors that point at a specific record carry the offending ``index`` or
``line``.
"""


class EvhdrError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(EvhdrError, ValueError):
    """Input data violates a documented invariant."""


# --- event streams -------------------------------------------------------


class EventError(ValidationError):
    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"{type(self).__name__} at event {index}")


class OutOfBoundsEvent(EventError):
    pass


class UnsortedTimestamps(EventError):
    pass


class InvalidPolarity(EventError):
    pass


class NegativeTimestamp(EventError):
    pass


class InvalidWindow(ValidationError):
    pass


class InsufficientTriggers(ValidationError):
    pass


class GeometryMismatch(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


# --- file formats --------------------------------------------------------


class FormatError(EvhdrError, ValueError):
    """A serialized file cannot be decoded."""


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class CorruptHeader(FormatError):
    pass


class TruncatedPayload(FormatError):
    def __init__(self, offset, message=None):
        self.offset = offset
        super().__init__(message or f"payload truncated at byte offset {offset}")


class TrailingData(FormatError):
    def __init__(self, offset):
        self.offset = offset
        super().__init__(f"unexpected data after payload at byte offset {offset}")


class MalformedLine(FormatError):
    def __init__(self, line, text=""):
        self.line = line
        super().__init__(f"malformed event on line {line}: {text!r}")


class MissingFile(EvhdrError, FileNotFoundError):
    pass


class TimestampNotIncreasing(ValidationError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"frame timestamp at index {index} does not increase")


class BitDepthOverflow(ValidationError):
    pass


class TriggerOutsideStream(ValidationError):
    def __init__(self, index, tolerance):
        self.index = index
        self.tolerance = tolerance
        super().__init__(
            f"trigger {index} lies more than {tolerance} us outside the event time span"
        )


# --- simulation / voxelization ------------------------------------------


class DegenerateSequence(ValidationError):
    pass


class NonFiniteIntensity(ValidationError):
    pass


class EventOutsideWindow(EventError):
    pass


class NonPositiveWindow(ValidationError):
    pass


# --- kernels / metrics ---------------------------------------------------


class NonPositiveLevels(ValidationError):
    pass


class EmptyWindow(ValidationError):
    pass


class NonDifferentiablePoint(EvhdrError, ArithmeticError):
    pass


class ImageTooSmall(ValidationError):
    pass


class ConfigError(ValidationError):
    """Configuration failed validation; ``path`` is the dotted field name."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path} {message}" if path else message)


class StageError(EvhdrError, RuntimeError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


class AllSamplesSaturated(UserWarning):
    """Pixels where both exposures clip; filled from the dark sample."""
