"""Kernel backend selection: compiled extension if available, NumPy otherwise.

Set SWARMCHOR_PURE=1 to force the pure NumPy path (useful for benchmarking
and for environments without a C toolchain).
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("SWARMCHOR_PURE") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

collision_projection = _impl.collision_projection
min_pair_clearance = _impl.min_pair_clearance
pair_clearance_series = _impl.pair_clearance_series
