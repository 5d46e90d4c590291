"""Exception hierarchy shared by every module."""


class DespeckleError(Exception):
    """Base class for all package errors."""


class ParameterError(DespeckleError, ValueError):
    """A numeric parameter is outside its admissible range."""


class DomainError(DespeckleError, ValueError):
    """A function argument lies outside the function's domain."""


class ContractViolation(DespeckleError, IndexError):
    """A caller broke an indexing or shape precondition."""


class ConfigurationError(DespeckleError, ValueError):
    """Malformed configuration: template sets, plan files."""


class DegenerateInputError(DespeckleError, ValueError):
    """Input image carries no usable signal (e.g. all zeros)."""


class NumericalBlowup(DespeckleError, FloatingPointError):
    """A solver produced a non-finite value."""

    def __init__(self, iteration: int, pixel: tuple[int, int], value: float):
        self.iteration = iteration
        self.pixel = pixel
        self.value = value
        super().__init__(
            f"non-finite value {value!r} at pixel {pixel} on iteration {iteration}"
        )
