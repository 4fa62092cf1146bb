"""Sample paths of Brownian motion and fractional Brownian motion.

Two couplings are supported. In the independent one, ``W`` and ``B^H``
come from separate Gaussian draws. In the Volterra-dependent one,
``B^H(t) = int_0^t K_H(t, s) dW(s)`` is built from the increments of
the same ``W``.

Randomness always flows through a ``numpy.random.Generator``. A campaign
derives path ``i`` from ``SeedSequence(master_seed, spawn_key=(i,))``, so
any path can be regenerated in isolation (see :func:`path_rng`).
"""

import csv
import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import DomainError, GridMismatch, SamplerError

# metadata string describing how the Volterra constant is fixed
VOLTERRA_NORMALIZATION = (
    "C_H = sqrt(H(2H-1)/B(2-2H, H-1/2)) / (H-1/2), "
    "calibrated so that int_0^t K_H(t,s)^2 ds = t^(2H)"
)


class NoiseCoupling(enum.Enum):
    """How the fractional component relates to the Brownian one."""

    INDEPENDENT = "independent"
    VOLTERRA = "volterra"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(c.value for c in cls)
            raise ValueError(f"unknown coupling {value!r} (expected one of: {names})") from None


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_j = j * dt`` on ``[0, t_max]``."""

    t_max: float
    n_steps: int

    def __post_init__(self):
        if not (isinstance(self.n_steps, (int, np.integer)) and self.n_steps >= 1):
            raise DomainError(f"n_steps must be a positive integer, got {self.n_steps!r}")
        if not (math.isfinite(self.t_max) and self.t_max > 0):
            raise DomainError(f"t_max must be positive and finite, got {self.t_max!r}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "t_max", float(self.t_max))

    @property
    def dt(self):
        return self.t_max / self.n_steps

    @property
    def times(self):
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True, eq=False)
class SamplePath:
    """One realization of ``(W, B^H)`` on a time grid.

    Attributes
    ----------
    grid : TimeGrid
    w, bh : ndarray
        Values at the ``n_steps + 1`` grid points, both starting at 0.
    hurst : float
    coupling : NoiseCoupling
    """

    grid: TimeGrid
    w: np.ndarray
    bh: np.ndarray
    hurst: float
    coupling: NoiseCoupling = NoiseCoupling.INDEPENDENT
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        bh = np.asarray(self.bh, dtype=float)
        n = self.grid.n_steps + 1
        if w.shape != (n,) or bh.shape != (n,):
            raise GridMismatch(f"path arrays must have length {n}, got {w.shape} and {bh.shape}")
        if w[0] != 0.0 or bh[0] != 0.0:
            raise DomainError("sample paths must start at 0")
        if not 0.0 < self.hurst < 1.0:
            raise DomainError(f"Hurst index must lie in (0, 1), got {self.hurst!r}")
        w.setflags(write=False)
        bh.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "bh", bh)
        object.__setattr__(self, "coupling", NoiseCoupling.parse(self.coupling))

    @classmethod
    def zero(cls, grid, hurst=0.7, coupling=NoiseCoupling.INDEPENDENT):
        """The identically zero path, handy for deterministic checks."""
        z = np.zeros(grid.n_steps + 1)
        return cls(grid, z, z.copy(), hurst, coupling)

    def to_csv(self, filename):
        """Write columns ``t, w, bh`` with a header row."""
        write_path_csv(self, filename)


def path_rng(master_seed, index):
    """Generator for path ``index`` of a campaign seeded with ``master_seed``.

    The stream depends only on the pair, never on which worker asks for it.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(seq))


def _check_hurst(H, lo=0.0):
    if not (lo < H < 1.0):
        raise DomainError(f"Hurst index must lie in ({lo:g}, 1), got {H!r}")


def sample_bm(grid, rng, size=None):
    """Brownian motion on ``grid``.

    Parameters
    ----------
    grid : TimeGrid
    rng : numpy.random.Generator
    size : int, optional
        Number of independent paths. When given the result has shape
        ``(size, n_steps + 1)``.
    """
    shape = (grid.n_steps,) if size is None else (size, grid.n_steps)
    dw = math.sqrt(grid.dt) * rng.standard_normal(shape)
    out = np.zeros(shape[:-1] + (grid.n_steps + 1,))
    np.cumsum(dw, axis=-1, out=out[..., 1:])
    return out


def fbm_covariance(t, s, H):
    """Covariance ``R_H(t, s) = (s^2H + t^2H - |t - s|^2H) / 2``.

    Works elementwise on arrays.
    """
    _check_hurst(H)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < 0) or np.any(s < 0):
        raise DomainError("times must be nonnegative")
    h2 = 2.0 * H
    out = 0.5 * (s**h2 + t**h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


def _fgn_autocov(n, H):
    # autocovariance of unit-step fractional Gaussian noise, lags 0..n
    k = np.arange(n + 1, dtype=float)
    h2 = 2.0 * H
    return 0.5 * (np.abs(k + 1) ** h2 - 2.0 * k**h2 + np.abs(k - 1) ** h2)


@functools.lru_cache(maxsize=64)
def _circulant_sqrt_eigs(n, H):
    """Square roots of the circulant eigenvalues, or None if not embeddable."""
    gamma = _fgn_autocov(n, H)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    eig = np.fft.fft(row).real
    tol = 1e-10 * np.max(np.abs(eig))
    if eig.min() < -tol:
        return None
    eig = np.clip(eig, 0.0, None)
    out = np.sqrt(eig / row.size)
    out.setflags(write=False)
    return out


@functools.lru_cache(maxsize=16)
def _fbm_cholesky(n, H):
    times = np.arange(1, n + 1, dtype=float)
    cov = fbm_covariance(times[:, None], times[None, :], H)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SamplerError(f"fBm covariance is not positive definite for n={n}, H={H}") from exc
    chol.setflags(write=False)
    return chol


def sample_fbm(grid, H, rng, size=None, method="auto"):
    """Exact fractional Brownian motion on ``grid``.

    The default draws stationary increments by circulant embedding
    (Davies-Harte) and falls back to a Cholesky factor of the full
    covariance when the embedding has a negative eigenvalue.

    Parameters
    ----------
    grid : TimeGrid
    H : float
        Hurst index in (0, 1).
    rng : numpy.random.Generator
    size : int, optional
        Number of paths; result shape is then ``(size, n_steps + 1)``.
    method : {"auto", "circulant", "cholesky"}
    """
    _check_hurst(H)
    n = grid.n_steps
    scale = grid.dt**H
    batch = 1 if size is None else int(size)
    if method not in ("auto", "circulant", "cholesky"):
        raise ValueError(f"unknown method {method!r}")

    lam = _circulant_sqrt_eigs(n, float(H)) if method != "cholesky" else None
    if lam is None and method == "circulant":
        raise SamplerError("circulant embedding is not nonnegative definite")

    out = np.zeros((batch, n + 1))
    if lam is not None:
        m = lam.size
        z = rng.standard_normal((batch, m)) + 1j * rng.standard_normal((batch, m))
        incr = np.fft.fft(lam * z, axis=-1).real[:, :n]
        np.cumsum(incr, axis=-1, out=out[:, 1:])
    else:
        chol = _fbm_cholesky(n, float(H))
        z = rng.standard_normal((batch, n))
        out[:, 1:] = z @ chol.T
    out *= scale
    return out[0] if size is None else out


# -- Volterra kernel ---------------------------------------------------------


def volterra_constant(H):
    """Normalizing constant ``C_H`` of the kernel (see ``VOLTERRA_NORMALIZATION``)."""
    _check_hurst(H, 0.5)
    b = H - 0.5
    return math.sqrt(H * (2.0 * H - 1.0) / special.beta(2.0 - 2.0 * H, b)) / b


def _check_kernel_args(t, s, H):
    _check_hurst(H, 0.5)
    if not (s > 0.0):
        raise DomainError(f"kernel needs s > 0, got s={s!r}")
    if not (s < t):
        raise DomainError(f"kernel needs s < t, got s={s!r}, t={t!r}")


def volterra_kernel(t, s, H):
    """Kernel ``K_H(t, s)`` for ``0 < s < t`` by direct quadrature.

    Evaluates
    ``C_H [ (t/s)^(H-1/2) (t-s)^(H-1/2)
    - (H-1/2) s^(1/2-H) int_s^t u^(H-3/2) (u-s)^(H-1/2) du ]``.
    The inner integral is mapped to ``u = s + (t-s) v`` on ``[0, 1]``,
    where the factor ``v^(H-1/2)`` is handed to QUADPACK as an algebraic
    weight so the endpoint behaviour is integrated exactly.
    """
    t = float(t)
    s = float(s)
    _check_kernel_args(t, s, H)
    b = H - 0.5
    span = t - s
    inner, _ = integrate.quad(
        lambda v: (s + span * v) ** (H - 1.5),
        0.0,
        1.0,
        weight="alg",
        wvar=(b, 0.0),
        epsabs=0.0,
        epsrel=1e-12,
        limit=200,
    )
    inner *= span ** (b + 1.0)
    first = (t / s) ** b * span**b
    return volterra_constant(H) * (first - b * s ** (-b) * inner)


def _kernel_small_s(t, s, H):
    # branch for s/t <= 1/2: the s^(1/2-H) singularity is explicit and the
    # hypergeometric factor is analytic in s/t
    b = H - 0.5
    kappa = special.gamma(b + 1.0) * special.gamma(-2.0 * b) / special.gamma(-b)
    smooth = 0.5 * (t - s) ** b * t**b * special.hyp2f1(-b, 1.0, 1.0 - 2.0 * b, s / t)
    return volterra_constant(H) * (smooth * s ** (-b) + kappa * s**b)


def _kernel_large_s(t, s, H):
    # branch for s/t >= 1/2: the factor (t - s)^(H-1/2) is explicit
    b = H - 0.5
    w = 1.0 - s / t
    return volterra_constant(H) * w**b * s ** (-b) * t ** (2.0 * b) * special.hyp2f1(-b, 1.0, H + 0.5, w)


def volterra_kernel_fast(t, s, H):
    """Vectorized ``K_H(t, s)`` through Gauss hypergeometric closed forms.

    Integrating the quadrature form by parts gives
    ``K_H = C_H w^b s^(-b) t^(2b) 2F1(-b, 1; H+1/2; w)`` with
    ``b = H - 1/2`` and ``w = 1 - s/t``. This is used for ``s >= t/2``.
    For ``s < t/2`` the connection formula at ``w = 1`` rewrites it as
    ``C_H [ (t-s)^b t^b s^(-b) 2F1(-b, 1; 1-2b; s/t) / 2 + kappa s^b ]``,
    ``kappa = Gamma(b+1) Gamma(-2b) / Gamma(-b)``, which keeps every
    hypergeometric argument in ``[0, 1/2]``. Agrees with
    :func:`volterra_kernel` to rounding.
    """
    _check_hurst(H, 0.5)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0) or np.any(s >= t):
        raise DomainError("kernel needs 0 < s < t")
    t, s = np.broadcast_arrays(t, s)
    out = np.empty(t.shape)
    small = s <= 0.5 * t
    out[small] = _kernel_small_s(t[small], s[small], H)
    out[~small] = _kernel_large_s(t[~small], s[~small], H)
    return float(out) if out.ndim == 0 else out


def kernel_square_integral(t, H, method="quadrature"):
    """``int_0^t K_H(t, s)^2 ds``; equals ``t^(2H)`` under the calibration.

    ``method="quadrature"`` uses :func:`volterra_kernel` pointwise (nested
    quadrature); ``"fast"`` uses the hypergeometric form.
    """
    _check_hurst(H, 0.5)
    if method == "quadrature":
        kern = lambda s: volterra_kernel(t, s, H) ** 2
    elif method == "fast":
        kern = lambda s: volterra_kernel_fast(t, s, H) ** 2
    else:
        raise ValueError(f"unknown method {method!r}")
    val, _ = integrate.quad(kern, 0.0, t, epsabs=0.0, epsrel=1e-10, limit=400)
    return val


def volterra_cross_covariance(t, H):
    """``E[W(t) B^H(t)] = int_0^t K_H(t, s) ds`` in closed form."""
    _check_hurst(H, 0.5)
    b = H - 0.5
    c = volterra_constant(H) * b
    return c * special.beta(1.5 - H, b) * t ** (H + 0.5) / (H + 0.5)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _first_cell_integral(j, lo, hi, H, m=24):
    """``int_lo^hi K_H(j, s) ds`` for ``0 = lo < hi <= j/2`` (vector ``j``)."""
    b = H - 0.5
    kappa = special.gamma(b + 1.0) * special.gamma(-2.0 * b) / special.gamma(-b)
    x, wts = special.roots_jacobi(m, 0.0, -b)
    half = 0.5 * (hi - lo)
    s = lo + half * (x + 1.0)
    j = np.asarray(j, dtype=float)[:, None]
    smooth = 0.5 * (j - s) ** b * j**b * special.hyp2f1(-b, 1.0, 1.0 - 2.0 * b, s / j)
    # weight s^(-b) = half^(-b) (1 + x)^(-b)
    sing = half ** (1.0 - b) * (smooth @ wts)
    return volterra_constant(H) * (sing + kappa * (hi ** (b + 1.0) - lo ** (b + 1.0)) / (b + 1.0))


def _last_cell_integral(j, lo, H, m=24):
    """``int_lo^j K_H(j, s) ds`` for ``lo >= j/2`` (vector ``j`` and ``lo``)."""
    b = H - 0.5
    x, wts = special.roots_jacobi(m, b, 0.0)
    j = np.asarray(j, dtype=float)[:, None]
    lo = np.asarray(lo, dtype=float)[:, None]
    half = 0.5 * (j - lo)
    s = lo + half * (x + 1.0)
    g = _kernel_large_s(j, s, H) / (j - s) ** b
    # weight (j - s)^b = half^b (1 - x)^b
    return (half ** (1.0 + b) * g) @ wts


@functools.lru_cache(maxsize=8)
def _volterra_weights(n, H):
    """Cell integrals ``A[j-1, i] = int_i^(i+1) K_H(j, s) ds`` on the unit grid.

    Returns ``(A, R)`` where ``R`` factors the covariance of the part of
    ``B^H`` not explained by the grid increments.
    """
    A = np.zeros((n, n))
    # j = 1: the single cell touches both singular ends, split at 1/2
    A[0, 0] = _first_cell_integral([1.0], 0.0, 0.5, H)[0] + _last_cell_integral([1.0], [0.5], H)[0]
    if n >= 2:
        js = np.arange(2, n + 1, dtype=float)
        A[1:, 0] = _first_cell_integral(js, 0.0, 1.0, H)
        A[np.arange(1, n), np.arange(1, n)] = _last_cell_integral(js, js - 1.0, H)
    u = 0.5 * (_GL_NODES + 1.0)
    for j in range(3, n + 1):
        cells = np.arange(1, j - 1, dtype=float)
        s = cells[:, None] + u[None, :]
        A[j - 1, 1 : j - 1] = 0.5 * (volterra_kernel_fast(float(j), s, H) @ _GL_WEIGHTS)

    times = np.arange(1, n + 1, dtype=float)
    resid = fbm_covariance(times[:, None], times[None, :], H) - A @ A.T
    resid = 0.5 * (resid + resid.T)
    vals, vecs = np.linalg.eigh(resid)
    tol = 1e-9 * float(times[-1] ** (2 * H))
    if vals.min() < -tol:
        raise SamplerError(
            f"Volterra residual covariance has eigenvalue {vals.min():.3e} (n={n}, H={H})"
        )
    R = vecs * np.sqrt(np.clip(vals, 0.0, None))
    A.setflags(write=False)
    R.setflags(write=False)
    return A, R


def sample_fbm_volterra(grid, H, w_increments, rng=None, exact=True):
    """Fractional Brownian motion driven by given Brownian increments.

    ``B^H(t_j) = sum_i Kbar_ji dW_i`` with ``Kbar_ji`` the average of
    ``K_H(t_j, .)`` over cell ``i``. Cell averages are computed by
    Gauss-Jacobi rules on the two singular end cells and Gauss-Legendre
    elsewhere. This sum is the conditional mean of the Volterra integral
    given the grid increments. With ``exact=True`` an independent Gaussian
    carrying the remaining conditional covariance is added (drawn from
    ``rng``), which makes the joint law of ``(W, B^H)`` on the grid exact.

    Parameters
    ----------
    grid : TimeGrid
    H : float
        Hurst index in (1/2, 1).
    w_increments : ndarray
        ``W(t_{i+1}) - W(t_i)``; shape ``(n_steps,)`` or ``(batch, n_steps)``.
    rng : numpy.random.Generator, optional
        Required when ``exact`` is true.
    """
    _check_hurst(H, 0.5)
    dw = np.asarray(w_increments, dtype=float)
    n = grid.n_steps
    if dw.shape[-1] != n or dw.ndim > 2:
        raise GridMismatch(f"expected {n} increments, got shape {dw.shape}")
    A, R = _volterra_weights(n, float(H))
    scale = grid.dt ** (H - 0.5)
    values = scale * (dw @ A.T)
    if exact:
        if rng is None:
            raise ValueError("exact Volterra sampling needs an rng for the residual part")
        z = rng.standard_normal(dw.shape)
        values = values + grid.dt**H * (z @ R.T)
    out = np.zeros(dw.shape[:-1] + (n + 1,))
    out[..., 1:] = values
    return out


def sample_path(grid, H, coupling, rng, exact_volterra=True):
    """Draw one :class:`SamplePath`: ``W`` first, then ``B^H``."""
    coupling = NoiseCoupling.parse(coupling)
    w = sample_bm(grid, rng)
    if coupling is NoiseCoupling.INDEPENDENT:
        bh = sample_fbm(grid, H, rng)
    else:
        bh = sample_fbm_volterra(grid, H, np.diff(w), rng, exact=exact_volterra)
    return SamplePath(grid, w, bh, H, coupling)


def write_path_csv(path, filename):
    """Dump ``path`` to ``filename`` as CSV with columns ``t, w, bh``."""
    with open(filename, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "w", "bh"])
        for row in zip(path.grid.times, path.w, path.bh):
            writer.writerow([format(float(x), ".17g") for x in row])


def read_path_csv(filename, hurst, coupling=NoiseCoupling.INDEPENDENT):
    """Inverse of :func:`write_path_csv` for a uniform grid."""
    data = np.loadtxt(filename, delimiter=",", skiprows=1, ndmin=2)
    t = data[:, 0]
    grid = TimeGrid(float(t[-1]), len(t) - 1)
    return SamplePath(grid, data[:, 1], data[:, 2], hurst, coupling)
