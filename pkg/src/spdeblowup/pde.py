"""Direct solver for the transformed random PDE system on an interval.

Component ``i`` solves

    dv_i/dt = (Laplacian + gamma_i - k_i1^2 / 2) v_i + exp(phi_i(t)) v_j^(1 + beta_i)

with zero Dirichlet data, where ``phi_i`` is the linear combination of
``(W, B^H)`` given by :func:`spdeblowup.params.component_exponents`. The
Laplacian is the centered second difference. Each substep is IMEX Euler:
diffusion and the linear term implicit, the reaction explicit. Substeps are
chosen so the reaction grows the solution by at most a fraction ``eta``.

Blow-up is declared when ``max_i |v_i|_inf`` reaches ``theta`` (default
``1e8 * (initial sup + 1)``). The crossing step is repeated as two half
steps and the hit time is log-linearly interpolated. Integration then
continues to ``theta_factor * theta`` so the threshold sensitivity can be
reported.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._kernels import kernels
from .errors import (
    DomainError,
    GridMismatch,
    NonPositivity,
    PreconditionError,
    StepCollapse,
)
from .params import (
    EigenMultiple,
    Tabulated,
    component_exponents,
    gamma_matches_eigenvalue,
)


@dataclass(frozen=True)
class SpatialMesh:
    """Uniform mesh of ``(0, L)``; unknowns live on the interior nodes."""

    domain_length: float = math.pi
    n_cells: int = 256

    def __post_init__(self):
        if not self.domain_length > 0:
            raise DomainError("domain_length must be positive")
        if int(self.n_cells) != self.n_cells or self.n_cells < 8:
            raise DomainError(f"n_cells must be an integer >= 8, got {self.n_cells!r}")
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def dx(self):
        return self.domain_length / self.n_cells

    @property
    def nodes(self):
        return np.arange(1, self.n_cells) * self.dx


@dataclass(frozen=True)
class SolverControls:
    """Tuning knobs for :func:`solve_random_pde`.

    Parameters
    ----------
    horizon : float, optional
        Stop time; defaults to the path horizon.
    theta : float, optional
        Blow-up threshold; defaults to ``1e8 * (initial sup + 1)``.
    theta_factor : float
        The run continues until ``theta_factor * theta`` to report sensitivity.
    eta : float
        Bound on the relative growth from the reaction per substep.
    substeps : int
        Minimum number of substeps per grid interval.
    min_dt : float
        Relative substep floor; going below it raises :class:`StepCollapse`.
    neg_tol : float
        Values below ``-neg_tol`` raise :class:`NonPositivity`.
    snapshot_every : int
        Keep full fields every this many grid steps (0 keeps none).
    nonlinear : bool
        Test hook; ``False`` drops the reaction term.
    """

    horizon: float = None
    theta: float = None
    theta_factor: float = 10.0
    eta: float = 0.002
    substeps: int = 4
    min_dt: float = 1e-14
    neg_tol: float = 1e-12
    snapshot_every: int = 0
    nonlinear: bool = True

    def __post_init__(self):
        if self.theta_factor <= 1.0:
            raise DomainError("theta_factor must exceed 1")
        if not 0 < self.eta < 1:
            raise DomainError("eta must lie in (0, 1)")
        if self.substeps < 1:
            raise DomainError("substeps must be >= 1")


@dataclass
class PdeTrajectory:
    """Stamps of the solution at grid times, plus the blow-up summary.

    ``t_blow`` is ``nan`` when no blow-up was detected before the horizon.
    ``t_blow_hi`` is the hitting time of ``theta_factor * theta``.
    ``snapshots`` is ``None`` or a tuple ``(times, v1, v2)`` of interior fields.
    """

    times: np.ndarray
    sup1: np.ndarray
    sup2: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    t_blow: float
    t_blow_hi: float
    theta: float
    t_end: float
    n_substeps: int
    mesh: SpatialMesh
    controls: SolverControls
    snapshots: object = None
    meta: dict = field(default_factory=dict)

    @property
    def blew_up(self):
        return not math.isnan(self.t_blow)

    def to_csv(self, filename):
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "sup_v1", "sup_v2", "h1", "h2"])
            for row in zip(self.times, self.sup1, self.sup2, self.h1, self.h2):
                w.writerow([f"{v:.17g}" for v in row])

    def summary(self):
        """JSON-compatible record of the run."""
        return {
            "t_blow": None if not self.blew_up else self.t_blow,
            "t_blow_hi": None if math.isnan(self.t_blow_hi) else self.t_blow_hi,
            "theta": self.theta,
            "theta_factor": self.controls.theta_factor,
            "t_end": self.t_end,
            "n_substeps": self.n_substeps,
            "mesh": {"domain_length": self.mesh.domain_length, "n_cells": self.mesh.n_cells},
            "controls": {
                "eta": self.controls.eta,
                "substeps": self.controls.substeps,
                "min_dt": self.controls.min_dt,
                "neg_tol": self.controls.neg_tol,
                "nonlinear": self.controls.nonlinear,
            },
        }


def initial_fields(params, mesh, eig):
    """Initial data sampled on the interior nodes."""
    x = mesh.nodes
    init = params.initial
    if isinstance(init, EigenMultiple):
        psi = eig.psi(x)
        return init.c1 * psi, init.c2 * psi
    if isinstance(init, Tabulated):
        f1 = np.interp(x, init.x, init.f1)
        f2 = np.interp(x, init.x, init.f2)
        if np.any(f1 < 0) or np.any(f2 < 0):
            raise DomainError("initial data must be nonnegative")
        return f1, f2
    raise DomainError(f"unsupported initial data {type(init).__name__}")


def solve_random_pde(params, consts, path, mesh=None, controls=None):
    """Integrate the random PDE system along ``path``.

    Raises :class:`NonPositivity` or :class:`StepCollapse` on stepping faults.
    """
    mesh = mesh or SpatialMesh(params.domain_length)
    controls = controls or SolverControls()
    if not math.isclose(mesh.domain_length, params.domain_length, rel_tol=1e-12):
        raise GridMismatch("mesh and params disagree on the domain length")
    grid = path.grid
    dt = grid.dt
    horizon = grid.t_max if controls.horizon is None else float(controls.horizon)
    j_end = int(round(horizon / dt))
    if j_end > grid.n_steps or not math.isclose(j_end * dt, horizon, rel_tol=1e-9, abs_tol=1e-12):
        raise GridMismatch(f"horizon {horizon!r} is not a grid time of the path")

    eig = consts.eig
    v1, v2 = initial_fields(params, mesh, eig)
    v1 = np.ascontiguousarray(v1, dtype=float)
    v2 = np.ascontiguousarray(v2, dtype=float)
    sup0 = max(v1.max(), v2.max())
    theta = 1e8 * (sup0 + 1.0) if controls.theta is None else float(controls.theta)
    theta_hi = controls.theta_factor * theta

    (a1, b1), (a2, b2) = component_exponents(params)
    phi1 = np.ascontiguousarray(a1 * path.w + b1 * path.bh)
    phi2 = np.ascontiguousarray(a2 * path.w + b2 * path.bh)
    c1 = params.gamma1 - params.k11**2 / 2.0
    c2 = params.gamma2 - params.k21**2 / 2.0
    dt_cap = dt / controls.substeps
    growth = max(c1, c2, 0.0)
    if growth > 0:
        dt_cap = min(dt_cap, 0.5 / growth)

    psi_w = eig.psi(mesh.nodes) * mesh.dx
    recs = [np.zeros(j_end + 2) for _ in range(4)]
    every = int(controls.snapshot_every)
    if every > 0:
        n_snap = j_end // every + 1
        snaps1 = np.zeros((n_snap, v1.size))
        snaps2 = np.zeros((n_snap, v1.size))
    else:
        snaps1 = snaps2 = np.zeros((1, 1))
    info = np.zeros(8)
    status = kernels().pde_drive(
        phi1,
        phi2,
        dt,
        j_end,
        v1,
        v2,
        c1,
        c2,
        1.0 + params.beta1,
        1.0 + params.beta2,
        1.0 / mesh.dx**2,
        bool(controls.nonlinear),
        float(controls.eta),
        dt_cap,
        theta,
        theta_hi,
        float(controls.min_dt),
        float(controls.neg_tol),
        psi_w,
        *recs,
        every,
        snaps1,
        snaps2,
        info,
    )
    if status == _kernels.NEGATIVE:
        raise NonPositivity(info[4], info[3])
    if status == _kernels.COLLAPSE:
        raise StepCollapse(info[2], info[3])
    j_last = int(info[6])
    n_rec = j_last + 1
    times = np.arange(n_rec) * dt
    if info[7] == 1.0:
        times = np.append(times, info[2])
        n_rec += 1
    snapshots = None
    if every > 0:
        k = j_last // every + 1
        snapshots = (np.arange(k) * every * dt, snaps1[:k], snaps2[:k])
    return PdeTrajectory(
        times=times,
        sup1=recs[0][:n_rec],
        sup2=recs[1][:n_rec],
        h1=recs[2][:n_rec],
        h2=recs[3][:n_rec],
        t_blow=float(info[0]),
        t_blow_hi=float(info[1]),
        theta=theta,
        t_end=float(info[2]),
        n_substeps=int(info[5]),
        mesh=mesh,
        controls=controls,
        snapshots=snapshots,
    )


def project_on_eigenfunction(v1, v2, mesh, eig):
    """``(v_1, psi)`` and ``(v_2, psi)`` by the trapezoid rule on the mesh.

    The boundary values are zero, so the rule reduces to a plain sum.
    """
    w = eig.psi(mesh.nodes) * mesh.dx
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    if v1.shape[-1] != w.size or v2.shape[-1] != w.size:
        raise GridMismatch("fields do not match the mesh")
    return v1 @ w, v2 @ w


@dataclass
class SubsolutionSeries:
    """Output of :func:`integrate_subsolution_ode` at grid times."""

    times: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    t_blow: float
    theta: float

    @property
    def blew_up(self):
        return not math.isnan(self.t_blow)


def integrate_subsolution_ode(path, consts, h0, eta=0.002, theta=None, horizon=None, min_dt=1e-14):
    """RK4 for the projected subsolution system along ``path``.

    ``h_1' = d_1 h_1 + exp(rho1 W + rho2 B^H) h_2^(1+beta1)`` and symmetrically
    for ``h_2``, with ``d_i = -lambda + gamma_i - k_i1^2 / 2``. Needs the
    coupling equalities so both components share one noise factor.
    """
    consts.require_coupling()
    p = consts.params
    grid = path.grid
    dt = grid.dt
    horizon = grid.t_max if horizon is None else float(horizon)
    j_end = int(round(horizon / dt))
    if j_end > grid.n_steps:
        raise GridMismatch("horizon beyond the path")
    h10, h20 = (float(v) for v in h0)
    if h10 < 0 or h20 < 0:
        raise DomainError("initial projections must be nonnegative")
    if theta is None:
        theta = 1e8 * (max(h10, h20) + 1.0)
    phi = np.ascontiguousarray(consts.rho1 * path.w + consts.rho2 * path.bh)
    d1 = -consts.lam + p.gamma1 - p.k11**2 / 2.0
    d2 = -consts.lam + p.gamma2 - p.k21**2 / 2.0
    rec1 = np.zeros(j_end + 1)
    rec2 = np.zeros(j_end + 1)
    info = np.zeros(4)
    status = kernels().ode_drive(
        phi, dt, j_end, h10, h20, d1, d2, 1.0 + p.beta1, 1.0 + p.beta2, float(eta), float(theta), float(min_dt), rec1, rec2, info
    )
    if status == _kernels.COLLAPSE:
        raise StepCollapse(info[1], 0.0)
    n = int(info[2]) + 1
    return SubsolutionSeries(np.arange(n) * dt, rec1[:n], rec2[:n], float(info[0]), float(theta))


@dataclass
class EnvelopeReport:
    """Outcome of :func:`check_global_envelope`.

    ``condition`` holds ``beta_i (C_i |psi|)^beta_i * int_0^T exp(rho_i . noise)``
    for each component at the horizon; the existence condition asks for
    values below 1. ``satisfied`` applies the margin. ``max_ratio`` is the
    largest solver-to-envelope ratio seen (``nan`` when not compared).
    ``applicable`` is False unless the two components share one integrand and
    one constant, the situation in which the envelope is a supersolution.
    """

    condition: tuple
    satisfied: bool
    margin: float
    applicable: bool
    max_ratio: float
    envelope_holds: object


def _envelope_conditions(params, consts, path):
    from .stopping import ExpFunctionalSpec, cumulative_exp_functional

    init = params.initial
    ps = consts.psi_sup
    out = []
    for beta, cc, (rw, rb) in (
        (params.beta1, init.c1, consts.rho_first),
        (params.beta2, init.c2, consts.rho_second),
    ):
        cum = cumulative_exp_functional(path, ExpFunctionalSpec(rw, rb)).values
        out.append(beta * (cc * ps) ** beta * cum)
    return out


def check_global_envelope(trajectory, params, consts, path, margin=0.5, rtol=1e-3):
    """Compare the solver output with the global-existence envelope.

    For eigen-multiple data the envelope reads
    ``C_i psi(x) / (1 - beta_i (C_i |psi|)^beta_i int_0^t exp(rho_i . noise))^(1/beta_i)``.
    When the condition at the horizon is at most ``1 - margin`` the solver
    values (full snapshots if kept, else sup norms) are compared with it at
    every stamp, allowing a relative discretization slack ``rtol``.
    """
    if not params.eigen_multiple:
        raise PreconditionError("the envelope needs eigen-multiple initial data")
    if not gamma_matches_eigenvalue(params, consts.eig):
        raise PreconditionError("the envelope needs gamma_i = lambda + k_i1^2 / 2")
    conds = _envelope_conditions(params, consts, path)
    grid = path.grid
    n = min(trajectory.times.size, grid.n_steps + 1)
    j_end = int(round(trajectory.times[n - 1] / grid.dt)) if n else 0
    at_horizon = tuple(float(c[j_end]) for c in conds)
    satisfied = all(c <= 1.0 - margin for c in at_horizon)
    p = params
    applicable = (
        math.isclose(p.initial.c1, p.initial.c2, rel_tol=1e-12)
        and p.beta1 == p.beta2
        and math.isclose(p.k11, p.k21, rel_tol=1e-12, abs_tol=1e-15)
        and math.isclose(p.k12, p.k22, rel_tol=1e-12, abs_tol=1e-15)
    )
    if not satisfied:
        return EnvelopeReport(at_horizon, False, margin, applicable, math.nan, None)

    betas = (p.beta1, p.beta2)
    cs = (p.initial.c1, p.initial.c2)
    ratio = 0.0
    if trajectory.snapshots is not None:
        s_times, s1, s2 = trajectory.snapshots
        psi = consts.eig.psi(trajectory.mesh.nodes)
        for k, t in enumerate(s_times):
            j = int(round(t / grid.dt))
            for i, field_ in enumerate((s1[k], s2[k])):
                env = cs[i] * psi / (1.0 - conds[i][j]) ** (1.0 / betas[i])
                ratio = max(ratio, float(np.max(field_ / env)))
    else:
        for j in range(n):
            if abs(trajectory.times[j] - j * grid.dt) > 1e-9 * max(1.0, j * grid.dt):
                continue
            for i, sup in enumerate((trajectory.sup1[j], trajectory.sup2[j])):
                env = cs[i] * consts.psi_sup / (1.0 - conds[i][j]) ** (1.0 / betas[i])
                ratio = max(ratio, float(sup / env))
    return EnvelopeReport(at_horizon, True, margin, applicable, ratio, ratio <= 1.0 + rtol)


@dataclass(frozen=True)
class SharpBound:
    """``value_i = beta_i (C_2 (1 + c) |psi|^2)^beta_i`` and ``budget_i = 1 / value_i``."""

    values: tuple
    budgets: tuple
    c: float


def sharp_bound_threshold(params, consts, c):
    """Condition value and exponential-functional budget for the sharp bound.

    ``c`` is the heat-kernel constant of the domain; it is not computable
    from the other inputs and must be supplied.
    """
    c = float(c)
    if not c > 0:
        raise DomainError(f"heat-kernel constant must be positive, got {c!r}")
    if not params.eigen_multiple:
        raise PreconditionError("the sharp bound needs eigen-multiple initial data")
    ps = consts.psi_sup
    base = params.initial.c2 * (1.0 + c) * ps**2
    values = (params.beta1 * base**params.beta1, params.beta2 * base**params.beta2)
    return SharpBound(values, tuple(1.0 / v for v in values), c)
