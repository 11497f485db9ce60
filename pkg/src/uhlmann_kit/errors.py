"""Exception hierarchy.

Each class carries the CLI exit code it maps to, so the command-line layer
never needs a lookup table of its own.
"""


class UhlmannKitError(Exception):
    exit_code = 1


class InputError(UhlmannKitError, ValueError):
    """Malformed or invalid input (bad matrix, bad file, bad argument)."""

    exit_code = 2


class SingularStateError(InputError):
    """A density matrix has an eigenvalue at or below the positivity floor."""


class DomainError(UhlmannKitError, ValueError):
    """A parameter point (or a finite-difference stencil) leaves the model domain."""

    exit_code = 3


class ConvergenceError(UhlmannKitError, RuntimeError):
    """A numerical integration failed to meet its tolerance."""

    exit_code = 4


class NotLocallyQuasiClassicalError(UhlmannKitError):
    """SLDs fail to commute where commutation is a precondition.

    Attributes:
        pair: indices (i, j) of the worst non-commuting pair.
        norm: the relative commutator norm of that pair.
    """

    exit_code = 5

    def __init__(self, message, pair=None, norm=None):
        super().__init__(message)
        self.pair = pair
        self.norm = norm
