"""Kernel backend selection.

The compiled extension is used when it imports; ``SHT_PURE_PYTHON=1``
forces the numpy fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

kernels = _kernels_py
BACKEND = "python"

if os.environ.get("SHT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        kernels = _compiled
        BACKEND = "compiled"

__all__ = ["kernels", "BACKEND", "get_kernels"]


def get_kernels(backend: str | None = None):
    """Kernel module for ``backend`` ("compiled", "python" or None for the default)."""
    if backend is None:
        return kernels
    if backend == "python":
        return _kernels_py
    if backend == "compiled":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {backend!r}")
