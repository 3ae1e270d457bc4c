"""Custom exception hierarchy for RAVE.

Every error raised by the library derives from `RaveError`. The CLI maps the
families below onto process exit codes through `exit_code_for`.
"""

from __future__ import annotations

from enum import IntEnum


class ExitCode(IntEnum):
    """Process exit codes emitted by the CLI."""

    OK = 0
    FAILURE = 1
    USAGE = 2
    IO = 3
    FORMAT = 4
    DIVERGENCE = 5
    RATE_OUT_OF_RANGE = 6


class RaveError(Exception):
    """Base error for domain-specific exceptions."""


class InvalidParameterError(RaveError):
    """Raised when a Gaussian parameter is non-finite or otherwise unusable."""


class InvalidInputError(RaveError):
    """Raised when inputs disagree in shape or violate subset containment.

    Typically occurs when an upstream gradient does not match the canvas, two
    images differ in size, or a scored subset is not inside the rendered one.
    """


class InvalidConfigError(RaveError):
    """Raised when a configuration value violates its documented range."""


class ConfigurationError(RaveError):
    """Raised when an environment variable holds a malformed value."""


class InvalidSpecError(RaveError):
    """Raised when a level specification cannot produce a valid hierarchy.

    Occurs when two consecutive fractions round to the same Gaussian count,
    leaving a context empty, or when the model has fewer Gaussians than levels.
    """


class DivergenceError(RaveError):
    """Raised when the optimization loss becomes non-finite.

    The iteration at which the loss diverged is kept on `iteration`.
    """

    def __init__(self, message: str, iteration: int) -> None:
        super().__init__(message)
        self.iteration = iteration


class EmptySelectionError(RaveError):
    """Raised when an operation is asked to work on an empty Gaussian subset."""


class BitstreamError(RaveError):
    """Base class for container decoding failures."""


class BadMagicError(BitstreamError):
    """Raised when a byte sequence does not start with the container magic."""


class UnsupportedVersionError(BitstreamError):
    """Raised when the container version is newer than this decoder."""


class CrcMismatchError(BitstreamError):
    """Raised when the header CRC-32 does not match the header bytes."""


class TruncatedPayloadError(BitstreamError):
    """Raised when the container is shorter than its header announces."""


class CorruptPayloadError(BitstreamError):
    """Raised when the payload fails to decompress or has the wrong length."""


class RateError(RaveError):
    """Base class for rate-control failures."""


class RateBelowMinimumError(RateError):
    """Raised when the target rate is below the lowest anchor rate.

    Transmission below G_1 has no defined context; callers may opt in to
    clamping instead.
    """


class InvalidRateTableError(RateError):
    """Raised when a rate table cannot support interpolation.

    Occurs when two adjacent anchors have identical measured rates.
    """


class BudgetExceededError(RateError):
    """Raised when a selection budget is larger than the scored context."""


class ArtifactIOError(RaveError):
    """Raised when an input file is missing or an output cannot be written."""


def exit_code_for(error: RaveError) -> ExitCode:
    """Return the CLI exit code matching an exception family."""
    if isinstance(error, ArtifactIOError):
        return ExitCode.IO
    if isinstance(error, BitstreamError):
        return ExitCode.FORMAT
    if isinstance(error, DivergenceError):
        return ExitCode.DIVERGENCE
    if isinstance(error, RateError):
        return ExitCode.RATE_OUT_OF_RANGE
    return ExitCode.FAILURE
