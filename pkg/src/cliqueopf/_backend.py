"""Kernel selection.

The compiled kernel is used when it imports; ``CLIQUEOPF_BACKEND=python``
forces the numpy implementation.
"""

import os

from . import _ipm_py

try:
    from . import _ipm_ext
except ImportError:  # extension not built
    _ipm_ext = None

_KERNELS = {"python": _ipm_py.solve_conic}
if _ipm_ext is not None:
    _KERNELS["compiled"] = _ipm_ext.solve_conic

_forced = os.environ.get("CLIQUEOPF_BACKEND", "").strip().lower()
if _forced and _forced not in _KERNELS:
    raise ImportError(f"CLIQUEOPF_BACKEND={_forced!r} is not available; "
                      f"have {sorted(_KERNELS)}")
DEFAULT = _forced or ("compiled" if "compiled" in _KERNELS else "python")


def available_backends() -> list:
    return sorted(_KERNELS)


def default_backend() -> str:
    return DEFAULT


def get(name=None):
    name = name or DEFAULT
    if name not in _KERNELS:
        raise ValueError(f"unknown backend {name!r}; have {sorted(_KERNELS)}")
    return _KERNELS[name]
