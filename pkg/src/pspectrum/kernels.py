"""Kernel backend selection.

The compiled extension ``_ckernels`` is used when it imports; otherwise the
numpy fallback.  Setting ``PSPECTRUM_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
leader_powers = _kernels_py.leader_powers
leader_log_powers = _kernels_py.leader_log_powers
sup_leaders = _kernels_py.sup_leaders

if os.environ.get("PSPECTRUM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        leader_powers = _ckernels.leader_powers
        leader_log_powers = _ckernels.leader_log_powers
        sup_leaders = _ckernels.sup_leaders


def get_backend(name):
    """Return the kernel module for ``name`` ('python' or 'cython')."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
