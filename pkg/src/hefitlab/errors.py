"""Exception types shared across the package."""

from __future__ import annotations


class LabError(Exception):
    """Base class for every error raised by hefitlab."""


class ParameterError(LabError, ValueError):
    """An argument is outside its allowed range."""


class ShapeError(LabError, ValueError):
    """Tensor dimensions do not conform to an op's contract."""


class NumericError(LabError, ArithmeticError):
    """A NaN or infinity showed up in values or gradients."""


class GraphStateError(LabError, RuntimeError):
    """Backward was requested on a graph that was already consumed."""


class InputError(LabError, ValueError):
    """Malformed input data (token ids, empty corpora, ...)."""


class ValidationError(LabError, ValueError):
    """A record failed schema validation."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ResourceError(LabError, LookupError):
    """Something required (data, a run, enough samples) is not available."""


class UndefinedCorrelationError(LabError, ArithmeticError):
    """Pearson's r is undefined because one input vector is constant."""


class AlignmentError(LabError, ValueError):
    """Prediction sets do not cover the same item ids."""

    def __init__(self, message: str, missing: tuple[str, ...] = ()) -> None:
        self.missing = missing
        super().__init__(message)


class ParseError(LabError, ValueError):
    """Generated text contained no usable samples."""

    def __init__(self, message: str, diagnostics: list[str] | None = None) -> None:
        self.diagnostics = list(diagnostics or [])
        super().__init__(message)


class TransportError(LabError, ConnectionError):
    """The generation endpoint could not be used."""


class AuthError(TransportError):
    pass


class EndpointTimeout(TransportError):
    pass


class MalformedResponse(TransportError):
    pass


class ConflictError(LabError, RuntimeError):
    """A registry entry exists under the same id but for a different config."""


class ConfigError(ValidationError):
    """An experiment config field is missing or invalid; ``field`` is its dotted path."""

    def __init__(self, field: str, message: str) -> None:
        self.field = field
        super().__init__(f"{field}: {message}")
