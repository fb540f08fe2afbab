"""Kernel backend selection.

The compiled extension is preferred. Set ``PDPSOLVE_BACKEND=python`` to force
the numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
kernels = _pykernels

if os.environ.get("PDPSOLVE_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _ext
    except ImportError:  # extension not built
        pass
    else:
        kernels = _ext
        BACKEND = "cython"


def get_kernels(name=None):
    """Return the kernel module for ``name`` ("cython", "python") or the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
