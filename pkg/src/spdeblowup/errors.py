"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a formula."""


class PreconditionError(ValueError):
    """A hypothesis required by an evaluation does not hold."""


class GridMismatch(ValueError):
    """Arrays handed to a routine do not match its time grid."""


class SamplerError(RuntimeError):
    """Exact sampling failed, e.g. a covariance is numerically not PD."""


class CouplingInconsistent(PreconditionError):
    """The two coupling equalities for the noise coefficients disagree.

    Attributes
    ----------
    lhs, rhs : float
        The two sides of the failing equality.
    which : str
        ``"W"`` for the Brownian row, ``"BH"`` for the fractional row.
    """

    def __init__(self, lhs, rhs, which):
        self.lhs = float(lhs)
        self.rhs = float(rhs)
        self.which = which
        super().__init__(
            f"coupling equality on the {which} coefficient fails: "
            f"{self.lhs!r} != {self.rhs!r}; only the general-case bounds apply"
        )


class MassConditionFailed(PreconditionError):
    """The initial mass is too small for the strict-exponent upper bound."""


class NonPositivity(RuntimeError):
    """The PDE solver produced a negative value beyond tolerance."""

    def __init__(self, t, value):
        self.t = float(t)
        self.value = float(value)
        super().__init__(f"negative value {self.value:.3e} at t={self.t:.6g}")


class StepCollapse(RuntimeError):
    """The adaptive substep underflowed before the blow-up threshold."""

    def __init__(self, t, dt):
        self.t = float(t)
        self.dt = float(dt)
        super().__init__(f"substep collapsed to {self.dt:.3e} at t={self.t:.6g}")
