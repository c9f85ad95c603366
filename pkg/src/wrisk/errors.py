"""Exception and warning types shared across the package."""


class ValidationError(ValueError):
    """An input violates a documented precondition or type invariant."""


class InfeasibilityError(RuntimeError):
    """A worst-case problem is numerically infeasible for the given multipliers.

    Raised e.g. when the metric-minus-loss form loses positive definiteness,
    when a scaling coefficient turns nonpositive, or when a matrix is too
    close to singular to invert reliably.
    """


class IntegrabilityError(InfeasibilityError):
    """A worst-case density fails to normalize (mass escapes the state space)."""


class BoundaryMassWarning(UserWarning):
    """More than 1% of a density's mass sits in the outermost grid cells."""
