"""Backend switch between numba-compiled kernels and the pure-numpy path.

Set ``SVRCONF_DISABLE_NUMBA=1`` in the environment to force the numpy path.
The choice can also be flipped at runtime with :func:`set_backend`, which is
what the benchmark script does.
"""

from __future__ import annotations

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

_FALSY = {"", "0", "false", "no", "off"}
_disabled = os.environ.get("SVRCONF_DISABLE_NUMBA", "").strip().lower() not in _FALSY

_backend = "numba" if HAVE_NUMBA and not _disabled else "numpy"


def backend() -> str:
    return _backend


def use_numba() -> bool:
    return _backend == "numba"


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity otherwise."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda f: f
