"""Gamma-function helpers used by the probability bounds.

The regularized lower incomplete gamma function ``P(nu, u)`` is evaluated
with the power series below ``u = nu + 1`` and the Lentz continued fraction
for ``Q = 1 - P`` above it.
"""

import math

import numpy as np

from .errors import DomainError

_EPS = 1e-16
_TINY = 1e-300
_MAXIT = 10_000


def log_gamma(x):
    """``ln |Gamma(x)|`` for ``x > 0``."""
    x = float(x)
    if not x > 0:
        raise DomainError(f"log_gamma needs x > 0, got {x!r}")
    return math.lgamma(x)


def _series(nu, u):
    # P(nu, u) = e^-u u^nu / Gamma(nu) * sum_n u^n / (nu (nu+1) ... (nu+n))
    term = 1.0 / nu
    total = term
    ap = nu
    for _ in range(_MAXIT):
        ap += 1.0
        term *= u / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-u + nu * math.log(u) - math.lgamma(nu))


def _continued_fraction(nu, u):
    # Q(nu, u) by the modified Lentz method
    b = u + 1.0 - nu
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAXIT):
        an = -i * (i - nu)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-u + nu * math.log(u) - math.lgamma(nu)) * h


def _p_scalar(nu, u):
    if not nu > 0:
        raise DomainError(f"nu must be positive, got {nu!r}")
    if u < 0 or math.isnan(u):
        raise DomainError(f"u must be nonnegative, got {u!r}")
    if u == 0:
        return 0.0
    if math.isinf(u):
        return 1.0
    if u < nu + 1.0:
        return min(1.0, _series(nu, u))
    return max(0.0, 1.0 - _continued_fraction(nu, u))


def regularized_lower_incomplete_gamma(nu, u):
    """``P(nu, u) = gamma(nu, u) / Gamma(nu)``, the CDF of a Gamma(nu, 1) law at ``u``.

    Accepts scalars or arrays (broadcast); returns a float for scalar input.
    """
    if np.isscalar(nu) and np.isscalar(u):
        return _p_scalar(float(nu), float(u))
    nu_a, u_a = np.broadcast_arrays(np.asarray(nu, dtype=float), np.asarray(u, dtype=float))
    out = np.empty(nu_a.shape)
    for idx in np.ndindex(nu_a.shape):
        out[idx] = _p_scalar(float(nu_a[idx]), float(u_a[idx]))
    return out


def regularized_upper_incomplete_gamma(nu, u):
    """``Q(nu, u) = 1 - P(nu, u)``, computed without cancellation for large ``u``."""
    nu = float(nu)
    u = float(u)
    if not nu > 0:
        raise DomainError(f"nu must be positive, got {nu!r}")
    if u < 0:
        raise DomainError(f"u must be nonnegative, got {u!r}")
    if u == 0:
        return 1.0
    if u < nu + 1.0:
        return max(0.0, 1.0 - _series(nu, u))
    return min(1.0, _continued_fraction(nu, u))
