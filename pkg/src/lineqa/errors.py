"""Exception types shared across the toolkit."""


class LineQaError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(LineQaError, ValueError):
    """An argument violates a documented precondition."""


class DomainError(LineQaError, ValueError):
    """A numeric input is outside the function's domain."""


class DataError(LineQaError):
    """A file, manifest, or CSV is missing, malformed, or inconsistent."""


class RenderError(LineQaError):
    """Text could not be rasterized (no font covers the sampled text)."""


class NoSignalError(LineQaError):
    """A crop has too little contrast for blur estimation."""


class NoTextError(LineQaError):
    """An ensemble operation received no text lines."""


class TrainingError(LineQaError):
    """Training produced non-finite values or otherwise diverged."""


class DegenerateError(LineQaError):
    """A correlation input has zero variance (constant or all-tied)."""
