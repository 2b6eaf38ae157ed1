from typing import Optional


class PharmonicError(Exception):
    """Base error. `exit_code` is what the command line returns when it escapes a command."""

    exit_code: int = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class InvalidParameterError(PharmonicError, ValueError):
    exit_code = 2


class SingularPointError(PharmonicError, ValueError):
    exit_code = 2


class OutOfTubeError(PharmonicError, ValueError):
    exit_code = 2


# spectral integration
class DegenerateStateError(PharmonicError, ArithmeticError):
    exit_code = 3


class IntegrationError(PharmonicError, RuntimeError):
    exit_code = 3


class SearchFailureError(PharmonicError, RuntimeError):
    exit_code = 3


class BracketFailureError(PharmonicError, RuntimeError):
    exit_code = 3


class MonotonicityError(PharmonicError, RuntimeError):
    exit_code = 3


# verification
class DegenerateGradientError(PharmonicError, ValueError):
    exit_code = 4


class ExclusionError(PharmonicError, ValueError):
    exit_code = 4


class VerificationError(PharmonicError, AssertionError):
    exit_code = 4


# finite elements
class MeshGenerationError(PharmonicError, ValueError):
    exit_code = 5


class LocationError(PharmonicError, ValueError):
    exit_code = 5


class LineSearchError(PharmonicError, RuntimeError):
    exit_code = 5


class SolverError(PharmonicError, RuntimeError):
    exit_code = 5
