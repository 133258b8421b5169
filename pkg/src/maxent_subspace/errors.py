"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Raised when array shapes are incompatible or a matrix is malformed."""


class DomainError(ValueError):
    """Raised when an input lies outside the domain of a function."""


class DivergenceError(RuntimeError):
    """Raised when an iterative procedure produces a non-finite value."""

    def __init__(self, iteration, value=None, what="objective"):
        self.iteration = iteration
        self.value = value
        super().__init__(
            f"non-finite {what} ({value!r}) encountered at iteration {iteration}"
        )


class FormatError(ValueError):
    """Base class for malformed on-disk files."""


class MalformedHeaderError(FormatError):
    pass


class DimensionOverflowError(FormatError):
    pass


class PayloadLengthError(FormatError):
    def __init__(self, expected, actual, path=None):
        self.expected = expected
        self.actual = actual
        where = f" in {path}" if path is not None else ""
        super().__init__(
            f"payload length mismatch{where}: expected {expected} bytes, got {actual} bytes"
        )
