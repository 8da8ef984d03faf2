"""Hot-loop kernels with a compiled core and a pure-Python fallback.

The compiled extension is used when it imports; set ``RADARFUSE_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active implementation.
"""
from __future__ import annotations

import os

from . import _pykernels as python

compiled = None
if os.environ.get("RADARFUSE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled  # type: ignore[no-redef]
    except ImportError:  # extension not built
        compiled = None

_active = compiled if compiled is not None else python
BACKEND = "compiled" if compiled is not None else "python"

farthest_point_sample = _active.farthest_point_sample
ball_query = _active.ball_query
hungarian_square = _active.hungarian_square
bev_intersection_area = _active.bev_intersection_area
bev_intersection_matrix = _active.bev_intersection_matrix

__all__ = [
    "BACKEND",
    "ball_query",
    "bev_intersection_area",
    "bev_intersection_matrix",
    "compiled",
    "farthest_point_sample",
    "hungarian_square",
    "python",
]
