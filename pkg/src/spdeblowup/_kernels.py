"""Hot loops with a numba and a pure-numpy implementation.

The time-stepping drivers are written once in plain Python using only
scalar arithmetic and calls to a step function. For the numba backend
both the driver and the step are compiled; for the numpy backend the
driver runs as ordinary Python and the step is vectorized, using
``scipy.linalg.solve_banded`` for the tridiagonal solves.

Use :func:`kernels` to get the set matching the active backend.
"""

import math
from types import FunctionType, SimpleNamespace

import numpy as np
from scipy.linalg import solve_banded

from . import _backend

# status codes returned by the drivers
RUNNING = 0
BLOWUP = 1
NEGATIVE = 2
COLLAPSE = 3


# -- exponential functional -------------------------------------------------


def _cumtrapz_exp_loop(expo, dt, cap, out):
    saturated = False
    prev = 0.0
    out[0] = 0.0
    for j in range(expo.size):
        x = expo[j]
        if x > cap:
            x = cap
            saturated = True
        cur = math.exp(x)
        if j > 0:
            out[j] = out[j - 1] + 0.5 * dt * (prev + cur)
        prev = cur
    return saturated


def _cumtrapz_exp_numpy(expo, dt, cap, out):
    saturated = bool(np.any(expo > cap))
    e = np.exp(np.minimum(expo, cap))
    out[0] = 0.0
    np.cumsum(0.5 * dt * (e[:-1] + e[1:]), out=out[1:])
    return saturated


def _yor_loop(z, h, nu, out):
    # z: (paths, steps) standard normals; integrates exp(2 X) for
    # X = B - nu t with the bridge-corrected Simpson rule per cell
    sq = math.sqrt(h)
    corr = 0.5 * h
    for p in range(z.shape[0]):
        x = 0.0
        ex2 = 1.0
        acc = 0.0
        for i in range(z.shape[1]):
            xn = x + sq * z[p, i] - nu * h
            exn2 = math.exp(2.0 * xn)
            acc += ex2 + 4.0 * math.exp(x + xn + corr) + exn2
            x = xn
            ex2 = exn2
        out[p] = acc * h / 6.0


def _yor_numpy(z, h, nu, out):
    x = np.zeros((z.shape[0], z.shape[1] + 1))
    np.cumsum(math.sqrt(h) * z - nu * h, axis=1, out=x[:, 1:])
    left = x[:, :-1]
    right = x[:, 1:]
    cells = np.exp(2.0 * left) + 4.0 * np.exp(left + right + 0.5 * h) + np.exp(2.0 * right)
    out[:] = cells.sum(axis=1) * h / 6.0


# -- PDE step ----------------------------------------------------------------


def _thomas_const(lower, diag, upper, rhs, out, cp):
    # tridiagonal solve with constant bands
    n = rhs.size
    cp[0] = upper / diag
    out[0] = rhs[0] / diag
    for m in range(1, n):
        denom = diag - lower * cp[m - 1]
        cp[m] = upper / denom
        out[m] = (rhs[m] - lower * out[m - 1]) / denom
    for m in range(n - 2, -1, -1):
        out[m] -= cp[m] * out[m + 1]


def _step_loop(v1, v2, h, e1, e2, c1, c2, p1, p2, inv_dx2, nonlinear, out1, out2, rhs, cp):
    r = h * inv_dx2
    n = v1.size
    for m in range(n):
        val = v1[m]
        if nonlinear:
            u = v2[m] if v2[m] > 0.0 else 0.0
            val += h * e1 * u**p1
        rhs[m] = val
    _THOMAS(-r, 1.0 + 2.0 * r - h * c1, -r, rhs, out1, cp)
    for m in range(n):
        val = v2[m]
        if nonlinear:
            u = v1[m] if v1[m] > 0.0 else 0.0
            val += h * e2 * u**p2
        rhs[m] = val
    _THOMAS(-r, 1.0 + 2.0 * r - h * c2, -r, rhs, out2, cp)


def _step_numpy(v1, v2, h, e1, e2, c1, c2, p1, p2, inv_dx2, nonlinear, out1, out2, rhs, cp):
    r = h * inv_dx2
    n = v1.size
    ab = np.empty((3, n))
    ab[0, 0] = 0.0
    ab[0, 1:] = -r
    ab[2, :-1] = -r
    ab[2, -1] = 0.0
    if nonlinear:
        rhs1 = v1 + h * e1 * np.maximum(v2, 0.0) ** p1
        rhs2 = v2 + h * e2 * np.maximum(v1, 0.0) ** p2
    else:
        rhs1 = v1
        rhs2 = v2
    ab[1, :] = 1.0 + 2.0 * r - h * c1
    out1[:] = solve_banded((1, 1), ab, rhs1, check_finite=False)
    ab[1, :] = 1.0 + 2.0 * r - h * c2
    out2[:] = solve_banded((1, 1), ab, rhs2, check_finite=False)


def _interp(phi, t, dt):
    n = phi.size - 1
    idx = int(t / dt)
    if idx >= n:
        idx = n - 1
    if idx < 0:
        idx = 0
    frac = (t - idx * dt) / dt
    return phi[idx] + frac * (phi[idx + 1] - phi[idx])


def _drive_pde(
    phi1,
    phi2,
    dt_grid,
    j_end,
    v1,
    v2,
    c1,
    c2,
    p1,
    p2,
    inv_dx2,
    nonlinear,
    eta,
    dt_cap,
    theta,
    theta_hi,
    min_dt,
    neg_tol,
    psi_w,
    rec_s1,
    rec_s2,
    rec_h1,
    rec_h2,
    snap_every,
    snaps1,
    snaps2,
    out_info,
):
    n = v1.size
    w1 = np.empty(n)
    w2 = np.empty(n)
    m1 = np.empty(n)
    m2 = np.empty(n)
    rhs = np.empty(n)
    cp = np.empty(n)
    out_info[7] = 0.0
    rec_s1[0] = np.max(v1)
    rec_s2[0] = np.max(v2)
    rec_h1[0] = np.dot(v1, psi_w)
    rec_h2[0] = np.dot(v2, psi_w)
    if snap_every > 0:
        snaps1[0, :] = v1
        snaps2[0, :] = v2
    t = 0.0
    hit = False
    t_hit = np.nan
    t_hit_hi = np.nan
    nsub = 0
    status = RUNNING
    j = 0
    while j < j_end and status == RUNNING:
        t_next = (j + 1) * dt_grid
        while status == RUNNING:
            remaining = t_next - t
            if remaining <= 1e-13 * t_next:
                break
            e1 = math.exp(_INTERP(phi1, t, dt_grid))
            e2 = math.exp(_INTERP(phi2, t, dt_grid))
            s1 = np.max(v1)
            s2 = np.max(v2)
            big = s1 if s1 > s2 else s2
            h = remaining if remaining < dt_cap else dt_cap
            if nonlinear and big > 0.0:
                g1 = e1 * max(s2, 0.0) ** p1
                g2 = e2 * max(s1, 0.0) ** p2
                rate = (g1 if g1 > g2 else g2) / big
                if rate * h > eta:
                    h = eta / rate
            if h < min_dt * max(1.0, t):
                status = COLLAPSE
                out_info[3] = h
                break
            _STEP(v1, v2, h, e1, e2, c1, c2, p1, p2, inv_dx2, nonlinear, w1, w2, rhs, cp)
            new_big = max(np.max(w1), np.max(w2))
            target = theta_hi if hit else theta
            finished = False
            if new_big >= target:
                # repeat the interval as two half steps and locate the
                # crossing by log-linear interpolation of the sup norm
                half = 0.5 * h
                _STEP(v1, v2, half, e1, e2, c1, c2, p1, p2, inv_dx2, nonlinear, m1, m2, rhs, cp)
                mid_big = max(np.max(m1), np.max(m2))
                e1m = math.exp(_INTERP(phi1, t + half, dt_grid))
                e2m = math.exp(_INTERP(phi2, t + half, dt_grid))
                _STEP(m1, m2, half, e1m, e2m, c1, c2, p1, p2, inv_dx2, nonlinear, w1, w2, rhs, cp)
                new_big = max(np.max(w1), np.max(w2))
                ta = -1.0
                sa = 1.0
                tb = 0.0
                sb = 1.0
                if mid_big >= target:
                    ta, sa, tb, sb = t, big, t + half, mid_big
                elif new_big >= target:
                    ta, sa, tb, sb = t + half, mid_big, t + h, new_big
                if ta >= 0.0:
                    frac = (math.log(target) - math.log(sa)) / (math.log(sb) - math.log(sa))
                    tc = ta + (tb - ta) * frac
                    if hit:
                        t_hit_hi = tc
                        finished = True
                    else:
                        hit = True
                        t_hit = tc
            low = min(np.min(w1), np.min(w2))
            if low < -neg_tol:
                status = NEGATIVE
                out_info[3] = low
                out_info[4] = t + h
                break
            v1[:] = w1
            v2[:] = w2
            t = t + h
            nsub += 1
            if finished:
                status = BLOWUP
        idx = -1
        if status == RUNNING:
            t = t_next
            j += 1
            idx = j
        elif status == BLOWUP:
            # off-grid final stamp at the time the upper threshold was met
            idx = j + 1
            out_info[7] = 1.0
        if idx >= 0:
            rec_s1[idx] = np.max(v1)
            rec_s2[idx] = np.max(v2)
            rec_h1[idx] = np.dot(v1, psi_w)
            rec_h2[idx] = np.dot(v2, psi_w)
            if snap_every > 0 and status == RUNNING and j % snap_every == 0:
                k = j // snap_every
                snaps1[k, :] = v1
                snaps2[k, :] = v2
    if status == RUNNING and hit:
        status = BLOWUP
    out_info[0] = t_hit
    out_info[1] = t_hit_hi
    out_info[2] = t
    out_info[5] = nsub
    out_info[6] = j
    return status


# -- projected ODE -----------------------------------------------------------


def _ode_rhs(t, x1, x2, phi, dt, d1, d2, p1, p2):
    e = math.exp(_INTERP(phi, t, dt))
    y1 = x1 if x1 > 0.0 else 0.0
    y2 = x2 if x2 > 0.0 else 0.0
    return d1 * x1 + e * y2**p1, d2 * x2 + e * y1**p2


def _drive_ode(phi, dt_grid, j_end, h1, h2, d1, d2, p1, p2, eta, theta, min_dt, rec1, rec2, out_info):
    rec1[0] = h1
    rec2[0] = h2
    t = 0.0
    status = RUNNING
    t_hit = np.nan
    j = 0
    while j < j_end and status == RUNNING:
        t_next = (j + 1) * dt_grid
        while True:
            remaining = t_next - t
            if remaining <= 1e-13 * t_next:
                break
            h = remaining
            f1, f2 = _ODE_RHS(t, h1, h2, phi, dt_grid, d1, d2, p1, p2)
            big = max(abs(h1), abs(h2))
            if big > 0.0:
                rate = max(abs(f1), abs(f2)) / big
                if rate * h > eta:
                    h = eta / rate
            if h < min_dt * max(1.0, t):
                status = COLLAPSE
                break
            k1a, k1b = f1, f2
            k2a, k2b = _ODE_RHS(t + 0.5 * h, h1 + 0.5 * h * k1a, h2 + 0.5 * h * k1b, phi, dt_grid, d1, d2, p1, p2)
            k3a, k3b = _ODE_RHS(t + 0.5 * h, h1 + 0.5 * h * k2a, h2 + 0.5 * h * k2b, phi, dt_grid, d1, d2, p1, p2)
            k4a, k4b = _ODE_RHS(t + h, h1 + h * k3a, h2 + h * k3b, phi, dt_grid, d1, d2, p1, p2)
            n1 = h1 + h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
            n2 = h2 + h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
            new_big = max(n1, n2)
            if new_big >= theta:
                if big > 0.0 and new_big > big:
                    frac = (math.log(theta) - math.log(big)) / (math.log(new_big) - math.log(big))
                else:
                    frac = 1.0
                t_hit = t + h * frac
                h1, h2 = n1, n2
                t = t + h
                status = BLOWUP
                break
            h1, h2 = n1, n2
            t = t + h
        if status == RUNNING:
            t = t_next
            j += 1
            rec1[j] = h1
            rec2[j] = h2
    out_info[0] = t_hit
    out_info[1] = t
    out_info[2] = j
    return status


# -- assembly ----------------------------------------------------------------
#
# The drivers reach their helpers through the globals _THOMAS, _STEP,
# _INTERP and _ODE_RHS. The numba versions see the compiled helpers bound
# below, which keeps them cacheable on disk; the numpy versions are copies
# of the same code objects with the globals rebound to Python helpers.

_THOMAS = _backend.jit(_thomas_const)
_STEP = _backend.jit(_step_loop)
_INTERP = _backend.jit(_interp)
_ODE_RHS = _backend.jit(_ode_rhs)


def _rebind(fn, **names):
    scope = dict(globals())
    scope.update(names)
    return FunctionType(fn.__code__, scope, fn.__name__, fn.__defaults__)


_cache = {}


def _build(name):
    if name == "numba":
        jit = _backend.jit
        return SimpleNamespace(
            name=name,
            cumtrapz_exp=jit(_cumtrapz_exp_loop),
            yor_simpson=jit(_yor_loop),
            pde_step=_STEP,
            pde_drive=jit(_drive_pde),
            ode_drive=jit(_drive_ode),
        )
    rhs = _rebind(_ode_rhs, _INTERP=_interp)
    return SimpleNamespace(
        name=name,
        cumtrapz_exp=_cumtrapz_exp_numpy,
        yor_simpson=_yor_numpy,
        pde_step=_step_numpy,
        pde_drive=_rebind(_drive_pde, _STEP=_step_numpy, _INTERP=_interp),
        ode_drive=_rebind(_drive_ode, _INTERP=_interp, _ODE_RHS=rhs),
    )


def kernels():
    """Kernel namespace for the active backend (built on first use)."""
    name = _backend.active_backend()
    if name not in _cache:
        _cache[name] = _build(name)
    return _cache[name]
