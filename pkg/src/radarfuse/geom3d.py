"""Oriented 3D box geometry.

Boxes are ``(x, y, z, l, w, h, theta)`` with the center at ``(x, y, z)``,
``l`` along the heading, ``w`` across it, ``h`` vertical, and ``theta`` the
yaw about +z. Frames are sensor-forward: +x ahead, +y left, +z up.
"""
from __future__ import annotations

import math
from dataclasses import astuple, dataclass
from typing import Iterable

import numpy as np

from . import kernels

TWO_PI = 2.0 * math.pi

#: forward range (open interval) and lateral half-width of the driving corridor
CORRIDOR_X = (0.0, 25.0)
CORRIDOR_HALF_WIDTH = 4.0


class GeometryError(ValueError):
    pass


def wrap_angle(theta: float) -> float:
    """Map ``theta`` into ``[-pi, pi)``."""
    if not math.isfinite(theta):
        raise GeometryError(f"angle must be finite, got {theta!r}")
    out = math.fmod(theta + math.pi, TWO_PI)
    if out < 0.0:
        out += TWO_PI
    out -= math.pi
    # fmod can land exactly on +pi after the shift for inputs near -pi
    if out >= math.pi:
        out -= TWO_PI
    return out


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if not np.all(np.isfinite(theta)):
        raise GeometryError("angles must be finite")
    out = np.mod(theta + np.pi, TWO_PI) - np.pi
    return np.where(out >= np.pi, out - TWO_PI, out)


@dataclass(frozen=True)
class Box7:
    x: float
    y: float
    z: float
    l: float
    w: float
    h: float
    theta: float

    def __post_init__(self):
        vals = astuple(self)
        if not all(math.isfinite(v) for v in vals):
            raise GeometryError(f"box fields must be finite: {vals}")
        if not (self.l > 0 and self.w > 0 and self.h > 0):
            raise GeometryError(f"box extents must be positive: l={self.l} w={self.w} h={self.h}")
        if not (-math.pi <= self.theta < math.pi):
            object.__setattr__(self, "theta", wrap_angle(self.theta))

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @classmethod
    def from_array(cls, arr: Iterable[float]) -> "Box7":
        return cls(*(float(v) for v in list(arr)[:7]))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def volume(self) -> float:
        return self.l * self.w * self.h

    @property
    def bev_area(self) -> float:
        return self.l * self.w


def _as_row(box) -> np.ndarray:
    if isinstance(box, Box7):
        return box.as_array()
    return np.asarray(box, dtype=np.float64)[:7]


def to_box_frame(points: np.ndarray, box) -> np.ndarray:
    """Express points (``N x 3``) in the box frame (centered, heading along +x)."""
    b = _as_row(box)
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))[:, :3] - b[:3]
    c, s = math.cos(b[6]), math.sin(b[6])
    x = c * p[:, 0] + s * p[:, 1]
    y = -s * p[:, 0] + c * p[:, 1]
    return np.stack([x, y, p[:, 2]], axis=1)


def points_in_box(points: np.ndarray, box) -> np.ndarray:
    """Boolean mask of points inside ``box``; faces count as inside."""
    b = _as_row(box)
    local = to_box_frame(points, b)
    return (
        (np.abs(local[:, 0]) <= 0.5 * b[3])
        & (np.abs(local[:, 1]) <= 0.5 * b[4])
        & (np.abs(local[:, 2]) <= 0.5 * b[5])
    )


def point_in_box(p, box) -> bool:
    return bool(points_in_box(np.asarray(p, dtype=np.float64).reshape(1, -1), box)[0])


def box_corners_bev(box) -> np.ndarray:
    """Ground-plane corners, counter-clockwise, shape ``4 x 2``."""
    b = _as_row(box)
    c, s = math.cos(b[6]), math.sin(b[6])
    hl, hw = 0.5 * b[3], 0.5 * b[4]
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + b[:2]


def box_corners(box) -> np.ndarray:
    """All eight corners, shape ``8 x 3`` (bottom face first)."""
    b = _as_row(box)
    bev = box_corners_bev(b)
    lo = np.column_stack([bev, np.full(4, b[2] - 0.5 * b[5])])
    hi = np.column_stack([bev, np.full(4, b[2] + 0.5 * b[5])])
    return np.vstack([lo, hi])


def bev_intersection(a, b) -> float:
    return float(kernels.bev_intersection_area(_as_row(a), _as_row(b)))


def bev_iou(a, b) -> float:
    ra, rb = _as_row(a), _as_row(b)
    inter = float(kernels.bev_intersection_area(ra, rb))
    union = ra[3] * ra[4] + rb[3] * rb[4] - inter
    return min(1.0, max(0.0, inter / union))


def _z_overlap(ra: np.ndarray, rb: np.ndarray):
    lo = np.maximum(ra[..., 2] - 0.5 * ra[..., 5], rb[..., 2] - 0.5 * rb[..., 5])
    hi = np.minimum(ra[..., 2] + 0.5 * ra[..., 5], rb[..., 2] + 0.5 * rb[..., 5])
    return np.maximum(0.0, hi - lo)


def iou3d(a, b) -> float:
    ra, rb = _as_row(a), _as_row(b)
    dz = float(_z_overlap(ra, rb))
    if dz <= 0.0:
        return 0.0
    inter = float(kernels.bev_intersection_area(ra, rb)) * dz
    union = ra[3] * ra[4] * ra[5] + rb[3] * rb[4] * rb[5] - inter
    return min(1.0, max(0.0, inter / union))


def bev_iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 7)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 7)
    inter = kernels.bev_intersection_matrix(a, b)
    union = (a[:, 3] * a[:, 4])[:, None] + (b[:, 3] * b[:, 4])[None, :] - inter
    return np.clip(inter / union, 0.0, 1.0)


def iou3d_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 7)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 7)
    inter = kernels.bev_intersection_matrix(a, b) * _z_overlap(a[:, None, :], b[None, :, :])
    vol_a = a[:, 3] * a[:, 4] * a[:, 5]
    vol_b = b[:, 3] * b[:, 4] * b[:, 5]
    union = vol_a[:, None] + vol_b[None, :] - inter
    return np.clip(inter / union, 0.0, 1.0)


def center_distance(a, b) -> float:
    ra, rb = _as_row(a), _as_row(b)
    d = ra[:3] - rb[:3]
    return math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])


def center_distance_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 7)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 7)
    d = a[:, None, :3] - b[None, :, :3]
    return np.sqrt(np.sum(d * d, axis=-1))


def in_corridor(box, x_range=CORRIDOR_X, half_width=CORRIDOR_HALF_WIDTH) -> bool:
    b = _as_row(box)
    return bool(x_range[0] < b[0] < x_range[1] and abs(b[1]) < half_width)


def in_corridor_mask(boxes: np.ndarray, x_range=CORRIDOR_X, half_width=CORRIDOR_HALF_WIDTH) -> np.ndarray:
    b = np.asarray(boxes, dtype=np.float64).reshape(-1, 7)
    return (b[:, 0] > x_range[0]) & (b[:, 0] < x_range[1]) & (np.abs(b[:, 1]) < half_width)
