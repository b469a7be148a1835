"""Exception and warning types shared across the package."""


class N2NError(Exception):
    """Base class for all package errors."""


class InvalidInput(N2NError, ValueError):
    pass


class CorruptFile(N2NError):
    pass


class UnsupportedVersion(N2NError):
    pass


class ApproximationFailed(N2NError):
    """The auction solver did not reach a full assignment within its budget."""


class NumericalFailure(N2NError, ArithmeticError):
    """A loss or objective became non-finite or diverged."""


class EmptyMesh(UserWarning):
    """Marching cubes found no crossing of the requested level."""
