"""Kernel backend selection.

The sequential LSTM loops dominate training and decoding time.  They are
compiled with numba when it is importable; a pure-numpy twin of every
kernel exists so the package also runs without numba.  The environment
variable STACKSQL_BACKEND ("numba" or "numpy") overrides auto-detection,
and set_backend() switches at runtime (used by the benchmark script and
the backend equivalence tests).
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

ENV_VAR = "STACKSQL_BACKEND"

_active = None


def available_backends():
    """Backends usable in this interpreter."""
    names = ["numpy"]
    if numba is not None:
        names.insert(0, "numba")
    return tuple(names)


def _default_backend():
    env = os.environ.get(ENV_VAR, "").strip().lower()
    if env:
        if env not in ("numba", "numpy"):
            raise ValueError(f"{ENV_VAR} must be 'numba' or 'numpy', got {env!r}")
        if env == "numba" and numba is None:
            raise RuntimeError(f"{ENV_VAR}=numba but numba is not importable")
        return env
    return "numba" if numba is not None else "numpy"


def active_backend():
    """Currently selected backend name."""
    global _active
    if _active is None:
        _active = _default_backend()
    return _active


def set_backend(name):
    """Force a backend ('numba' or 'numpy'); returns the previous one."""
    global _active
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and numba is None:
        raise RuntimeError("numba backend requested but numba is not importable")
    previous = active_backend()
    _active = name
    return previous


def njit(func):
    """numba.njit with caching when numba exists, identity otherwise."""
    if numba is None:  # pragma: no cover
        return func
    return numba.njit(func, cache=True)
