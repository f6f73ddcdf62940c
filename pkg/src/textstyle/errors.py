"""Exception types shared across the package."""


class TextStyleError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(TextStyleError):
    """Tensor shapes do not satisfy an operation's contract."""


class ValidationError(TextStyleError):
    """Input data or configuration violates a stated precondition."""


class ParseError(TextStyleError):
    """A manifest line could not be parsed."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class DecodeError(TextStyleError):
    """An image or binary artifact file could not be decoded."""


class DegenerateInputError(TextStyleError):
    """A numerically degenerate input (e.g. near-zero vector to normalize)."""


class StaleArtifactError(TextStyleError):
    """Persisted artifacts disagree (vocabulary fingerprint, version, seed)."""


class DivergenceError(TextStyleError):
    """Optimization produced a non-finite loss."""

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)
        self.iteration = iteration
