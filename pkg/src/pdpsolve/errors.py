"""Exception types raised by the solvers."""


class DimensionError(ValueError):
    """Operands have incompatible sizes."""


class ConfigurationError(ValueError):
    """Invalid problem or experiment parameters."""


class NonConvexityError(ArithmeticError):
    """A curvature that must be positive was found nonpositive."""


class IndefinitePreconditionerError(ArithmeticError):
    """A preconditioner that must be positive definite is not."""


class BreakdownError(ArithmeticError):
    """Krylov coefficients are inconsistent with a positive definite operator."""


class RankDeficiencyError(ArithmeticError):
    """An assembled matrix is numerically singular."""


class StagnationError(RuntimeError):
    """The outer iteration stopped making progress."""


class SubspaceConditionError(ValueError):
    """The surrogate subspace does not satisfy ``V in W + V~``."""


class InfeasibleStartError(ValueError):
    """The initial iterate violates the constraint."""
