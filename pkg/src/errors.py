"""Exception hierarchy shared by every module."""


class LindbladForgeError(Exception):
    """Base class for all library errors."""


class NonHermitianInput(LindbladForgeError):
    """A matrix required to be Hermitian is not, within tolerance."""


class DimensionMismatch(LindbladForgeError):
    pass


class SingularResolvent(LindbladForgeError):
    """(h - w) cannot be inverted at the requested frequency."""


class NonHermitianKossakowski(LindbladForgeError):
    pass


class NotPSD(LindbladForgeError):
    pass


class MaxRefinement(LindbladForgeError):
    """Step halving did not reach the local error target."""


class DimensionCap(LindbladForgeError):
    pass


class TruncationUnconverged(LindbladForgeError):
    pass


class GridMismatch(LindbladForgeError):
    pass


class NonPositiveValue(LindbladForgeError):
    pass


class DegenerateNormalization(LindbladForgeError):
    """No positive eigenvalue to normalize against."""


class ConfigError(LindbladForgeError):
    pass


class ExactUnavailable(LindbladForgeError):
    """The exact benchmark needs a pseudomode network bath."""


class InvalidInitialState(LindbladForgeError):
    """Initial density matrix is not unit-trace, Hermitian and PSD."""


class TruncationWarning(UserWarning):
    """Highest Fock layer carries too much population."""
