"""Hot numeric kernels with backend selection at import time.

The compiled Cython core is used when available; otherwise the pure-Python
reference takes over with identical semantics. Force a backend with
``BIDA_KERNELS=cython`` or ``BIDA_KERNELS=python`` (``auto`` is the default).
"""

import os

_requested = os.environ.get("BIDA_KERNELS", "auto").lower()

if _requested not in ("auto", "cython", "python"):
    raise ImportError(f"BIDA_KERNELS must be auto, cython or python, got {_requested!r}")

if _requested == "python":
    from bida.kernels import _pure as _impl

    KERNEL_BACKEND = "python"
else:
    try:
        from bida.kernels import _core as _impl  # type: ignore[attr-defined]

        KERNEL_BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        from bida.kernels import _pure as _impl

        KERNEL_BACKEND = "python"

wrap_angle = _impl.wrap_angle
idm_accel = _impl.idm_accel
bicycle_step = _impl.bicycle_step
point_segment_distance = _impl.point_segment_distance
obb_corners = _impl.obb_corners
obb_overlap = _impl.obb_overlap
obb_distance = _impl.obb_distance
point_obb_distance = _impl.point_obb_distance
collision_pairs = _impl.collision_pairs
min_clearance = _impl.min_clearance
FAR_CLEARANCE = _impl.FAR_CLEARANCE

__all__ = [
    "KERNEL_BACKEND",
    "FAR_CLEARANCE",
    "wrap_angle",
    "idm_accel",
    "bicycle_step",
    "point_segment_distance",
    "obb_corners",
    "obb_overlap",
    "obb_distance",
    "point_obb_distance",
    "collision_pairs",
    "min_clearance",
]
