"""Exception hierarchy.

ValidationError subclasses signal bad inputs or violated preconditions
(CLI exit code 1).  NumericError subclasses signal runtime numerical
failure (CLI exit code 2).
"""


class SwitchdynError(Exception):
    pass


class ValidationError(SwitchdynError):
    pass


class OriginNotEquilibrium(ValidationError):
    """Some field does not vanish at the origin."""


class NotTriangular(ValidationError):
    """Upper-right block residual exceeds the triangularity tolerance."""


class MissingSplit(ValidationError):
    """Operation requires a declared (n, m) coordinate split."""


class NotOnFace(ValidationError):
    """Initial state has nonzero transverse coordinates."""


class Reducible(ValidationError):
    """Rate matrix is not irreducible."""


class NotMetzler(ValidationError):
    """Matrix has a negative off-diagonal entry."""


class EmptyWindow(ValidationError):
    """Requested time window contains no data."""


class DepthExceeded(SwitchdynError):
    """Bracket family exhausted the iteration depth below full rank."""

    def __init__(self, rank, depth):
        super().__init__(f"rank {rank} after depth {depth}")
        self.rank = rank
        self.depth = depth


class NumericError(SwitchdynError):
    pass


class StepUnderflow(NumericError):
    """Adaptive step size fell below the hard floor."""


class NonFiniteState(NumericError):
    """NaN or infinity encountered during integration."""


class RateBoundViolated(NumericError):
    """Realized total switching rate exceeded the declared bound."""
