"""Backend selection for the hot loops.

The compiled kernels use numba when it is importable. Setting the
environment variable ``SPDEBLOWUP_DISABLE_NUMBA=1`` (or calling
:func:`set_backend` with ``"numpy"``) routes every kernel through the
pure-numpy implementations instead. Both backends implement the same
arithmetic and are cross-checked in the test suite.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

ENV_FLAG = "SPDEBLOWUP_DISABLE_NUMBA"


def _env_disabled():
    return os.environ.get(ENV_FLAG, "").strip().lower() in ("1", "true", "yes", "on")


_active = "numba" if (HAVE_NUMBA and not _env_disabled()) else "numpy"


def active_backend():
    """Name of the backend currently used by the kernels."""
    return _active


def set_backend(name):
    """Switch kernels between ``"numba"`` and ``"numpy"`` at runtime.

    Returns the previously active backend name so callers can restore it.
    """
    global _active
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    previous = _active
    _active = name
    return previous


def jit(fn):
    """Compile ``fn`` in nopython mode, or return it unchanged without numba."""
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)
