"""System parameters, derived constants and stopping thresholds.

The system lives on the interval ``(0, L)`` with Dirichlet data. Initial
values are either multiples ``f_i = C_i psi`` of the first eigenfunction
or arbitrary nonnegative tables on a mesh.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import (
    CouplingInconsistent,
    DomainError,
    MassConditionFailed,
    PreconditionError,
)
from .noise import NoiseCoupling

COUPLING_RTOL = 1e-9


@dataclass(frozen=True)
class EigenMultiple:
    """Initial data ``f_1 = c1 psi``, ``f_2 = c2 psi`` with ``0 < c1 <= c2``."""

    c1: float
    c2: float

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > 0):
            raise DomainError("eigen-multiple constants must be positive")
        if self.c1 > self.c2:
            raise DomainError(f"need c1 <= c2, got c1={self.c1!r}, c2={self.c2!r}")


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Initial data given by values on a mesh covering ``[0, L]``.

    ``x`` must start at 0 and end at ``L``; ``f1``, ``f2`` must be
    nonnegative and vanish at both ends.
    """

    x: np.ndarray
    f1: np.ndarray
    f2: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        f1 = np.asarray(self.f1, dtype=float)
        f2 = np.asarray(self.f2, dtype=float)
        if x.ndim != 1 or x.size < 3 or f1.shape != x.shape or f2.shape != x.shape:
            raise DomainError("tabulated data needs matching 1-D arrays with at least 3 points")
        if np.any(np.diff(x) <= 0) or x[0] != 0.0:
            raise DomainError("tabulated mesh must start at 0 and increase strictly")
        if np.any(f1 < 0) or np.any(f2 < 0):
            raise DomainError("tabulated initial values must be nonnegative")
        if f1[0] != 0 or f1[-1] != 0 or f2[0] != 0 or f2[-1] != 0:
            raise DomainError("tabulated initial values must vanish at the boundary")
        for name, arr in (("x", x), ("f1", f1), ("f2", f2)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class EigenPair:
    """First Dirichlet eigenpair of ``-d^2/dx^2`` on ``(0, L)``.

    ``psi`` is normalized to unit integral, so
    ``psi(x) = pi / (2L) sin(pi x / L)``.
    """

    length: float
    lam: float
    psi_sup: float

    def psi(self, x):
        return self.psi_sup * np.sin(math.pi * np.asarray(x, dtype=float) / self.length)

    @property
    def psi_sq_integral(self):
        """``int_0^L psi^2 = pi^2 / (8 L)``."""
        return math.pi**2 / (8.0 * self.length)


@dataclass(frozen=True)
class SystemParams:
    """Full description of one experiment's system.

    Attributes
    ----------
    beta1, beta2 : float
        Reaction exponents, ``beta1 >= beta2 > 0``.
    gamma1, gamma2 : float
        Linear drift constants.
    k : tuple of tuple
        ``k[i][j]`` multiplies ``W`` (j=0) or ``B^H`` (j=1) in component i.
    hurst : float
        Must lie in (1/2, 1).
    coupling : NoiseCoupling
    domain_length : float
    initial : EigenMultiple or Tabulated
    """

    beta1: float
    beta2: float
    gamma1: float
    gamma2: float
    k: tuple
    hurst: float
    coupling: NoiseCoupling = NoiseCoupling.INDEPENDENT
    domain_length: float = math.pi
    initial: object = field(default_factory=lambda: EigenMultiple(1.0, 1.0))

    def __post_init__(self):
        k = tuple(tuple(float(v) for v in row) for row in np.asarray(self.k, dtype=float))
        if len(k) != 2 or any(len(r) != 2 for r in k):
            raise DomainError("k must be a 2x2 matrix")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "coupling", NoiseCoupling.parse(self.coupling))
        for name in ("beta1", "beta2", "gamma1", "gamma2", "hurst", "domain_length"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise DomainError(f"{name} must be finite")
            object.__setattr__(self, name, val)
        if not (self.beta2 > 0 and self.beta1 >= self.beta2):
            raise DomainError(f"need beta1 >= beta2 > 0, got {self.beta1!r}, {self.beta2!r}")
        if any(v < 0 or not math.isfinite(v) for row in k for v in row):
            raise DomainError("noise coefficients k_ij must be finite and nonnegative")
        if not 0.5 < self.hurst < 1.0:
            raise DomainError(f"Hurst index must lie in (1/2, 1), got {self.hurst!r}")
        if not self.domain_length > 0:
            raise DomainError("domain length must be positive")
        if not isinstance(self.initial, (EigenMultiple, Tabulated)):
            raise DomainError("initial data must be EigenMultiple or Tabulated")
        if isinstance(self.initial, Tabulated):
            if not math.isclose(self.initial.x[-1], self.domain_length, rel_tol=1e-12):
                raise DomainError("tabulated mesh must end at the domain length")

    @property
    def k11(self):
        return self.k[0][0]

    @property
    def k12(self):
        return self.k[0][1]

    @property
    def k21(self):
        return self.k[1][0]

    @property
    def k22(self):
        return self.k[1][1]

    @property
    def equal_beta(self):
        return self.beta1 == self.beta2

    @property
    def eigen_multiple(self):
        return isinstance(self.initial, EigenMultiple)


def eigenpair(domain_length):
    """First Dirichlet eigenpair on ``(0, L)``."""
    L = float(domain_length)
    if not L > 0:
        raise DomainError("domain length must be positive")
    return EigenPair(L, (math.pi / L) ** 2, math.pi / (2.0 * L))


def coupled_exponents(beta1, beta2, k, tol=COUPLING_RTOL):
    """``(rho1, rho2)`` for raw coefficients, after checking both equalities.

    ``rho1 = (1+beta1) k21 - k11`` must equal ``(1+beta2) k11 - k21`` and
    ``rho2 = (1+beta1) k22 - k12`` must equal ``(1+beta2) k12 - k22``,
    up to ``tol`` relative to ``max(|k_ij|, 1)``.
    """
    (k11, k12), (k21, k22) = k
    scale = max(1.0, *(abs(v) for v in (k11, k12, k21, k22)))
    rows = (
        ("W", (1 + beta1) * k21 - k11, (1 + beta2) * k11 - k21),
        ("BH", (1 + beta1) * k22 - k12, (1 + beta2) * k12 - k22),
    )
    for which, lhs, rhs in rows:
        if abs(lhs - rhs) > tol * scale:
            raise CouplingInconsistent(lhs, rhs, which)
    return rows[0][1], rows[1][1]


def derive_coupled_exponents(params, tol=COUPLING_RTOL):
    """``(rho1, rho2)`` of a :class:`SystemParams`; raises CouplingInconsistent."""
    return coupled_exponents(params.beta1, params.beta2, params.k, tol)


def component_exponents(params):
    """Per-component ``(W, B^H)`` coefficients of the reaction factors.

    Component 1 carries ``((1+b1) k21 - k11, (1+b1) k22 - k12)`` and
    component 2 carries ``((1+b2) k11 - k21, (1+b2) k12 - k22)``. They
    coincide exactly when the coupling equalities hold.
    """
    p = params
    first = ((1 + p.beta1) * p.k21 - p.k11, (1 + p.beta1) * p.k22 - p.k12)
    second = ((1 + p.beta2) * p.k11 - p.k21, (1 + p.beta2) * p.k12 - p.k22)
    return first, second


def compute_D1(beta1, beta2):
    """``D1 = (b1-b2)/(1+b1) * ((1+b1)/(1+b2))^((1+b2)/(b1-b2))``."""
    if not beta1 > beta2 > 0:
        raise DomainError(f"D1 needs beta1 > beta2 > 0, got {beta1!r}, {beta2!r}")
    d = beta1 - beta2
    return d / (1 + beta1) * ((1 + beta1) / (1 + beta2)) ** ((1 + beta2) / d)


def compute_epsilon0(h2_0, D1, beta1, beta2):
    """Largest admissible ``eps0 = min(1, (h2_0 / D1^(1/(1+b2)))^(b1-b2))``."""
    if not h2_0 > 0:
        raise DomainError("h2_0 must be positive")
    return min(1.0, (h2_0 / D1 ** (1.0 / (1.0 + beta2))) ** (beta1 - beta2))


def optimal_epsilon0(E0, D1, beta1, beta2):
    """Maximizer of the bracket ``eps0 / 2^(1+b2) - eps0^p D1 / E0^(1+b2)``.

    Here ``p = (1+b1)/(b1-b2)``. The bracket is concave in ``eps0`` and
    vanishes at 0, so the largest ``N^-1`` over ``eps0 <= cap`` is attained
    at ``min(cap, eps0*)``.
    """
    p = (1.0 + beta1) / (beta1 - beta2)
    if not E0 > 0:
        return 0.0
    return (E0 ** (1.0 + beta2) / (2.0 ** (1.0 + beta2) * p * D1)) ** (1.0 / (p - 1.0))


def check_mass_condition(eps0, E0, D1, beta1, beta2):
    """``2^-(1+b2) eps0 E0^(1+b2) >= eps0^((1+b1)/(b1-b2)) D1``."""
    lhs = 2.0 ** (-(1.0 + beta2)) * eps0 * E0 ** (1.0 + beta2)
    rhs = eps0 ** ((1.0 + beta1) / (beta1 - beta2)) * D1
    return bool(lhs >= rhs)


def initial_projections(initial, eig):
    """``(int f1 psi, int f2 psi)`` over the domain."""
    if isinstance(initial, EigenMultiple):
        q = eig.psi_sq_integral
        return initial.c1 * q, initial.c2 * q
    psi = eig.psi(initial.x)
    h1 = integrate.simpson(initial.f1 * psi, x=initial.x)
    h2 = integrate.simpson(initial.f2 * psi, x=initial.x)
    return float(h1), float(h2)


def compute_E0(initial, eig):
    """``E(0) = int (f1 + f2) psi``."""
    h1, h2 = initial_projections(initial, eig)
    return h1 + h2


@dataclass(frozen=True)
class Thresholds:
    """Thresholds that the exponential functionals are compared against.

    ``None`` marks a threshold whose formula does not apply to the
    parameters (wrong exponent case or missing eigen-multiple data).
    """

    theta_lower: object = None
    theta_lower_parts: object = None
    theta_u1: object = None
    theta_u2: object = None
    mass_condition: object = None

    def require_u2(self):
        if self.mass_condition is False:
            raise MassConditionFailed("mass condition fails; strict-exponent upper bound unavailable")
        if self.theta_u2 is None:
            raise PreconditionError("strict-exponent threshold needs beta1 > beta2")
        return self.theta_u2


@dataclass(frozen=True)
class DerivedConstants:
    """Every constant computed from a :class:`SystemParams`.

    ``rho1``/``rho2`` are ``None`` when the coupling equalities fail; the
    message is kept in ``coupling_error``. ``a`` uses ``beta1`` as the
    exponent (it is the common exponent when ``beta1 == beta2``) and ``a1``
    uses ``beta2``.
    """

    params: SystemParams
    eig: EigenPair
    rho1: object
    rho2: object
    coupling_error: object
    rho_first: tuple
    rho_second: tuple
    gamma_min: float
    k_sq: float
    a: float
    a1: float
    D1: object
    eps0: object
    h1_0: float
    h2_0: float
    E0: float
    thresholds: Thresholds

    @property
    def lam(self):
        return self.eig.lam

    @property
    def psi_sup(self):
        return self.eig.psi_sup

    @property
    def coupling_holds(self):
        return self.rho1 is not None

    @property
    def theta_lower(self):
        return self.thresholds.theta_lower

    @property
    def theta_u1(self):
        return self.thresholds.theta_u1

    @property
    def theta_u2(self):
        return self.thresholds.theta_u2

    @property
    def sandwich_drift_holds(self):
        """True when ``gamma_i = lambda + k_i1^2 / 2`` for both components."""
        return gamma_matches_eigenvalue(self.params, self.eig)

    def require_coupling(self):
        if not self.coupling_holds:
            raise self.coupling_error
        return self.rho1, self.rho2


def gamma_matches_eigenvalue(params, eig, rtol=1e-9):
    p = params
    ok1 = math.isclose(p.gamma1, eig.lam + p.k11**2 / 2, rel_tol=rtol, abs_tol=rtol)
    ok2 = math.isclose(p.gamma2, eig.lam + p.k21**2 / 2, rel_tol=rtol, abs_tol=rtol)
    return ok1 and ok2


def _field(consts, name):
    # accepts DerivedConstants or a plain mapping of partial results
    return consts[name] if isinstance(consts, dict) else getattr(consts, name)


def stopping_thresholds(params, consts):
    """Thresholds for the lower and the two upper stopping times.

    ``theta_lower = min_i 1 / (beta_i C_i^beta_i |psi|^beta_i)`` (eigen-multiple
    data only), ``theta_u1 = 2^beta / (beta E0^beta)`` when the exponents are
    equal, and ``theta_u2 = N`` when ``beta1 > beta2`` and the mass condition
    holds (``None`` plus ``mass_condition=False`` otherwise).
    """
    p = params
    lower = parts = None
    if isinstance(p.initial, EigenMultiple):
        ps = _field(consts, "psi_sup")
        parts = (
            1.0 / (p.beta1 * (p.initial.c1 * ps) ** p.beta1),
            1.0 / (p.beta2 * (p.initial.c2 * ps) ** p.beta2),
        )
        lower = min(parts)
    E0 = _field(consts, "E0")
    u1 = u2 = mass = None
    if p.equal_beta:
        beta = p.beta1
        u1 = 2.0**beta / (beta * E0**beta) if E0 > 0 else math.inf
    else:
        D1 = _field(consts, "D1")
        eps0 = _field(consts, "eps0")
        mass = False if eps0 is None else check_mass_condition(eps0, E0, D1, p.beta1, p.beta2)
        if mass:
            u2 = theta_n(eps0, E0, D1, p.beta1, p.beta2)
    return Thresholds(lower, parts, u1, u2, mass)


def theta_n(eps0, E0, D1, beta1, beta2):
    """``N = [b2 E0^b2 (eps0 / 2^(1+b2) - eps0^((1+b1)/(b1-b2)) D1 / E0^(1+b2))]^-1``."""
    bracket = eps0 / 2.0 ** (1 + beta2) - eps0 ** ((1 + beta1) / (beta1 - beta2)) * D1 / E0 ** (
        1 + beta2
    )
    denom = beta2 * E0**beta2 * bracket
    return math.inf if denom <= 0 else 1.0 / denom


def derive_constants(params, tol=COUPLING_RTOL):
    """Compute :class:`DerivedConstants` for ``params``. Pure and repeatable."""
    p = params
    eig = eigenpair(p.domain_length)
    try:
        rho1, rho2 = derive_coupled_exponents(p, tol)
        err = None
    except CouplingInconsistent as exc:
        rho1 = rho2 = None
        err = exc
    first, second = component_exponents(p)
    gamma_min = min(p.gamma1, p.gamma2)
    k_sq = max(p.k11**2 / 2.0, p.k21**2 / 2.0)
    gap = eig.lam - gamma_min + k_sq
    h1_0, h2_0 = initial_projections(p.initial, eig)
    E0 = h1_0 + h2_0
    D1 = eps0 = None
    if not p.equal_beta:
        D1 = compute_D1(p.beta1, p.beta2)
        if h2_0 > 0:
            cap = compute_epsilon0(h2_0, D1, p.beta1, p.beta2)
            eps0 = min(cap, optimal_epsilon0(h1_0 + h2_0, D1, p.beta1, p.beta2))
    partial = {"psi_sup": eig.psi_sup, "E0": E0, "D1": D1, "eps0": eps0}
    thresholds = stopping_thresholds(p, partial)
    return DerivedConstants(
        params=p,
        eig=eig,
        rho1=rho1,
        rho2=rho2,
        coupling_error=err,
        rho_first=first,
        rho_second=second,
        gamma_min=gamma_min,
        k_sq=k_sq,
        a=p.beta1 * gap,
        a1=p.beta2 * gap,
        D1=D1,
        eps0=eps0,
        h1_0=h1_0,
        h2_0=h2_0,
        E0=E0,
        thresholds=thresholds,
    )
