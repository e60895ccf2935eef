"""Kernel backend selection.

The compiled Cython kernels are preferred; the pure Python module is a
drop-in replacement. Set ``FIELDCAST_PURE_PYTHON=1`` to force the fallback.
"""

import os

from fieldcast import _kernels_py

if os.environ.get("FIELDCAST_PURE_PYTHON"):
    kernels = _kernels_py
    BACKEND = "python"
else:
    try:
        from fieldcast import _kernels as kernels  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        kernels = _kernels_py
        BACKEND = "python"


def get_backend() -> str:
    """Name of the active kernel backend: ``"compiled"`` or ``"python"``."""
    return BACKEND
