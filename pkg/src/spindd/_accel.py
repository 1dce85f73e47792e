"""Backend selection for the hot kernels.

Kernels are compiled with ``numba.njit`` unless numba is missing or the
environment variable ``SPINDD_DISABLE_NUMBA`` is set to a truthy value, in
which case the vectorised numpy implementations are used.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

_FALSY = {"", "0", "false", "no", "off"}

NUMBA_AVAILABLE = numba is not None
NUMBA_DISABLED = os.environ.get("SPINDD_DISABLE_NUMBA", "").strip().lower() not in _FALSY

_backend = "numba" if NUMBA_AVAILABLE and not NUMBA_DISABLED else "numpy"


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    if numba is None:
        return func
    return numba.njit(cache=True)(func)


def get_backend():
    return _backend


def set_backend(name):
    """Switch kernels between ``"numba"`` and ``"numpy"`` at runtime.

    Returns the previous backend name so callers can restore it.
    """
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba is not installed")
    previous, _backend = _backend, name
    return previous
