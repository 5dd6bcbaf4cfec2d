"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates the documented domain of an operation."""


class DegenerateInputError(ValueError):
    """Input is structurally valid but carries no usable signal
    (e.g. fewer than two distinct scores for a mixture fit)."""


class NumericalDegeneracyError(ArithmeticError):
    """A numerical step failed on near-singular input
    (singular covariance, matrix square root of a non-PSD product)."""


class DotaParseError(ValueError):
    """A malformed annotation line; carries the 1-based line number."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no
