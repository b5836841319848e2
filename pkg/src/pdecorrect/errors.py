"""Exception types shared across the package."""


class InputContractError(ValueError):
    """An argument violates a documented precondition (shape, range, flag)."""


class DegenerateInputError(ValueError):
    """Input is structurally valid but makes the requested quantity undefined."""


class DivergenceError(RuntimeError):
    """A time integration blew up; the message names the offending step."""


class ConvergenceError(RuntimeError):
    """An iterative solve failed to reach its tolerance."""


class CapacityError(RuntimeError):
    """A dense operation would exceed the configured memory cap."""


class NumericalError(RuntimeError):
    """A numerical kernel (e.g. SVD) failed; carries diagnostics."""


class FormatError(ValueError):
    """A file does not conform to its binary or CSV contract."""


class CacheMismatchError(ValueError):
    """A persisted Jacobian cache does not match the model it is applied to."""
