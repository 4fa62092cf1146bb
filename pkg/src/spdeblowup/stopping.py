"""Exponential functionals along sample paths and their first crossings.

Every stopping-time bound in the package has the shape

    inf { t >= 0 : int_0^t exp(rho_w W(s) + rho_bh B^H(s) + drift s) ds >= theta }

possibly with the integrand replaced by the pointwise min or max of two
such exponentials. The integral is a cumulative trapezoid on the path grid
and the crossing time is linearly interpolated inside the bracketing cell.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._kernels import kernels
from .errors import DomainError, GridMismatch, PreconditionError
from .params import gamma_matches_eigenvalue

EXPONENT_CAP = 700.0


class Combine(enum.Enum):
    SINGLE = "single"
    MIN = "min"
    MAX = "max"


@dataclass(frozen=True)
class ExpFunctionalSpec:
    """Integrand ``exp(rho_w W + rho_bh B^H + drift s)``.

    With ``combine`` set to ``Combine.MIN`` or ``Combine.MAX`` the integrand
    is the pointwise min or max of this exponential and the one described
    by ``other`` (whose own ``combine`` is ignored).
    """

    rho_w: float
    rho_bh: float
    drift: float = 0.0
    combine: Combine = Combine.SINGLE
    other: "ExpFunctionalSpec | None" = None

    def __post_init__(self):
        for name in ("rho_w", "rho_bh", "drift"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise DomainError(f"{name} must be finite, got {v!r}")
            object.__setattr__(self, name, v)
        combine = Combine(self.combine)
        object.__setattr__(self, "combine", combine)
        if combine is not Combine.SINGLE and self.other is None:
            raise DomainError(f"combine={combine.value!r} needs a second spec")

    def exponent(self, path):
        """Exponent values on the grid, combined as requested."""
        t = path.grid.times
        x = self.rho_w * path.w + self.rho_bh * path.bh + self.drift * t
        if self.combine is Combine.SINGLE:
            return x
        y = self.other.rho_w * path.w + self.other.rho_bh * path.bh + self.other.drift * t
        # exp is monotone, so combining exponents combines integrands
        return np.minimum(x, y) if self.combine is Combine.MIN else np.maximum(x, y)


@dataclass(frozen=True)
class Cumulative:
    """Cumulative integral on the path grid plus an overflow flag."""

    values: np.ndarray
    saturated: bool


def cumulative_exp_functional(path, spec, cap=EXPONENT_CAP):
    """Trapezoidal cumulative integral of the integrand described by ``spec``.

    Exponents above ``cap`` are clamped and flagged; by then the crossing is
    certain for any threshold of practical size.
    """
    expo = np.ascontiguousarray(spec.exponent(path), dtype=float)
    if expo.size != path.grid.n_steps + 1:
        raise GridMismatch("path and grid disagree")
    out = np.empty_like(expo)
    sat = kernels().cumtrapz_exp(expo, path.grid.dt, float(cap), out)
    return Cumulative(out, bool(sat))


@dataclass(frozen=True)
class StoppingEstimate:
    """Result of a first-crossing search.

    Attributes
    ----------
    crossed : bool
        False means the integral stayed below the threshold up to the horizon.
    t_hat : float
        Interpolated crossing time, ``nan`` when censored.
    bracket : tuple or None
        Grid indices ``(i - 1, i)`` of the cell containing the crossing.
    threshold, horizon, integral_at_horizon : float
    saturated : bool
        Whether the exponent cap was hit anywhere on the path.
    """

    crossed: bool
    t_hat: float
    bracket: object
    threshold: float
    horizon: float
    integral_at_horizon: float
    saturated: bool = False

    @property
    def censored(self):
        return not self.crossed

    @property
    def value(self):
        """Crossing time, or ``inf`` when censored."""
        return self.t_hat if self.crossed else math.inf


def first_crossing(cumulative, grid, threshold, saturated=False):
    """First time a nondecreasing cumulative array reaches ``threshold``."""
    if isinstance(cumulative, Cumulative):
        saturated = saturated or cumulative.saturated
        cumulative = cumulative.values
    c = np.asarray(cumulative, dtype=float)
    if c.size != grid.n_steps + 1:
        raise GridMismatch("cumulative array and grid disagree")
    threshold = float(threshold)
    if not threshold > 0.0:
        raise DomainError(f"threshold must be positive, got {threshold!r}")
    horizon = grid.t_max
    i = int(np.searchsorted(c, threshold, side="left"))
    if i >= c.size:
        return StoppingEstimate(False, math.nan, None, threshold, horizon, float(c[-1]), saturated)
    dt = grid.dt
    lo, hi = c[i - 1], c[i]
    t_hat = (i - 1) * dt + dt * (threshold - lo) / (hi - lo)
    t_hat = min(max(t_hat, (i - 1) * dt), i * dt)
    return StoppingEstimate(True, float(t_hat), (i - 1, i), threshold, horizon, float(c[-1]), saturated)


def crossing_time(path, spec, threshold, cap=EXPONENT_CAP):
    """Convenience wrapper: cumulative functional then first crossing."""
    cum = cumulative_exp_functional(path, spec, cap)
    return first_crossing(cum, path.grid, threshold)


def _earlier(a, b):
    if a.crossed and (not b.crossed or a.t_hat <= b.t_hat):
        return a
    if b.crossed:
        return b
    # both censored: report the one that came closer relative to its threshold
    return a if a.integral_at_horizon / a.threshold >= b.integral_at_horizon / b.threshold else b


def _require_eigen(consts):
    p = consts.params
    if not p.eigen_multiple:
        raise PreconditionError("this bound needs eigen-multiple initial data")


def _require_sandwich_gamma(consts):
    if not gamma_matches_eigenvalue(consts.params, consts.eig):
        raise PreconditionError("this bound needs gamma_i = lambda + k_i1^2 / 2")


def _drift_upper(consts, which):
    return -(consts.a if which == 1 else consts.a1)


def lower_star_spec(consts):
    consts.require_coupling()
    return ExpFunctionalSpec(consts.rho1, consts.rho2)


def upper_1_spec(consts):
    consts.require_coupling()
    return ExpFunctionalSpec(consts.rho1, consts.rho2, _drift_upper(consts, 1))


def upper_2_spec(consts):
    consts.require_coupling()
    return ExpFunctionalSpec(consts.rho1, consts.rho2, _drift_upper(consts, 2))


def tau_lower_star(path, consts, check_gamma=True):
    """Lower bound on the blow-up time under the coupling equalities.

    Both components share the integrand, so the infimum is a single
    crossing of the smaller per-component threshold.
    """
    _require_eigen(consts)
    if check_gamma:
        _require_sandwich_gamma(consts)
    return crossing_time(path, lower_star_spec(consts), consts.thresholds.theta_lower)


def tau_upper_1(path, consts):
    """Upper bound for equal exponents ``beta1 == beta2``."""
    if not consts.params.equal_beta:
        raise PreconditionError("tau_upper_1 needs beta1 == beta2")
    return crossing_time(path, upper_1_spec(consts), consts.thresholds.theta_u1)


def tau_upper_2(path, consts):
    """Upper bound for ``beta1 > beta2``; raises if the mass condition fails."""
    if consts.params.beta1 <= consts.params.beta2:
        raise PreconditionError("tau_upper_2 needs beta1 > beta2")
    theta = consts.thresholds.require_u2()
    return crossing_time(path, upper_2_spec(consts), theta)


def _general_specs(consts, drift=0.0):
    (aw, ab), (bw, bb) = consts.rho_first, consts.rho_second
    return ExpFunctionalSpec(aw, ab, drift), ExpFunctionalSpec(bw, bb, drift)


def tau_double_star(path, params, consts, check_gamma=True):
    """General lower bound without the coupling equalities.

    The earlier of the two per-component crossings, each against its own
    threshold.
    """
    _require_eigen(consts)
    if check_gamma:
        _require_sandwich_gamma(consts)
    first, second = _general_specs(consts)
    t1, t2 = consts.thresholds.theta_lower_parts
    return _earlier(crossing_time(path, first, t1), crossing_time(path, second, t2))


def tau_prime(path, params, consts, check_gamma=True):
    """Max of the two general integrands against the smaller threshold."""
    _require_eigen(consts)
    if check_gamma:
        _require_sandwich_gamma(consts)
    first, second = _general_specs(consts)
    spec = ExpFunctionalSpec(first.rho_w, first.rho_bh, 0.0, Combine.MAX, second)
    return crossing_time(path, spec, consts.thresholds.theta_lower)


def tau_upper_general(path, params, consts, case="equal"):
    """Upper bound without the coupling equalities.

    Integrates the pointwise min of the two general integrands times the
    upper-bound drift. ``case`` is ``"equal"`` (threshold ``theta_u1``) or
    ``"strict"`` (threshold ``N``, mass condition required).
    """
    p = params
    if case == "equal":
        if not p.equal_beta:
            raise PreconditionError("equal case needs beta1 == beta2")
        theta = consts.thresholds.theta_u1
        drift = _drift_upper(consts, 1)
    elif case == "strict":
        if p.beta1 <= p.beta2:
            raise PreconditionError("strict case needs beta1 > beta2")
        theta = consts.thresholds.require_u2()
        drift = _drift_upper(consts, 2)
    else:
        raise DomainError(f"case must be 'equal' or 'strict', got {case!r}")
    first, second = _general_specs(consts, drift)
    spec = ExpFunctionalSpec(first.rho_w, first.rho_bh, drift, Combine.MIN, second)
    return crossing_time(path, spec, theta)
