"""Backend selection for the sweep kernels.

The compiled extension ``latgauge._kernels`` is used when it imports; the
pure-Python module ``latgauge._kernels_py`` is the fallback. Setting the
environment variable ``LATGAUGE_BACKEND=python`` forces the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("LATGAUGE_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "cython"


def get_backend(name=None):
    """Return the kernel module for ``name`` ("cython", "python" or None for the default)."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")


sweep_cyclic = _impl.sweep_cyclic
sweep_circle = _impl.sweep_circle
sweep_su2 = _impl.sweep_su2
