"""Pinhole camera math: point and oriented-box projection plus 2D rectangle overlap.

Coordinate conventions used throughout the toolkit:

  World frame:
    - Right-handed, up-axis is +z.
    - Oriented boxes yaw about the world +z axis.

  Camera frame (standard computer vision):
    - Poses are stored camera-to-world: p_world = R @ p_cam + t.
    - The camera looks along its +z axis; image u grows rightward and
      v grows downward.

  Image frame:
    - Pixels, origin at the top-left corner, u in [0, width], v in [0, height].

Projection uses a fixed near plane at 0.01 m.  Box edges crossing the near
plane are clipped at the plane so partially-behind boxes still yield a finite
bounding rectangle.  All operations are pure functions of value inputs and are
safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, NotVisible

NEAR_PLANE = 0.01

_ORTHO_TOL = 1e-6

# Cube corner i has sign bits (sx, sy, sz) = (i >> 2, (i >> 1) & 1, i & 1);
# edges connect corners differing in exactly one bit.
_CUBE_EDGES = tuple(
    (i, i ^ bit) for i in range(8) for bit in (1, 2, 4) if i < (i ^ bit)
)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx <= self.width) or not (0 <= self.cy <= self.height):
            raise ValueError("principal point must lie inside the image")
        if int(self.width) <= 0 or int(self.height) <= 0:
            raise ValueError("image dimensions must be positive")

    @property
    def image_rect(self) -> "Rect2D":
        return Rect2D(0.0, 0.0, float(self.width), float(self.height))


@dataclass(eq=False)
class CameraPose:
    """Camera-to-world pose: rotation (3x3 orthonormal) and translation (meters)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        if self.rotation.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if self.translation.shape != (3,):
            raise ValueError("translation must be a 3-vector")
        residual = self.rotation.T @ self.rotation - np.eye(3)
        if np.max(np.abs(residual)) > _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(self.rotation) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation determinant must be +1")


@dataclass(eq=False)
class OrientedBox3D:
    """Axis-extent box with yaw about the world up-axis.

    `size` holds full extents; corners are center +/- size/2 rotated by
    `heading` (radians) about world +z.
    """

    center: np.ndarray
    size: np.ndarray
    heading: float = 0.0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.size = np.asarray(self.size, dtype=np.float64)
        if self.center.shape != (3,) or self.size.shape != (3,):
            raise ValueError("center and size must be 3-vectors")
        if np.any(self.size <= 0):
            raise ValueError("all size components must be positive")

    def corners(self) -> np.ndarray:
        """World-frame corners, shape (8, 3), ordered by sign bits (x, y, z)."""
        hx, hy, hz = self.size / 2.0
        offsets = np.array(
            [
                [sx * hx, sy * hy, sz * hz]
                for sx in (-1.0, 1.0)
                for sy in (-1.0, 1.0)
                for sz in (-1.0, 1.0)
            ]
        )
        c, s = math.cos(self.heading), math.sin(self.heading)
        rotated = np.empty_like(offsets)
        rotated[:, 0] = c * offsets[:, 0] - s * offsets[:, 1]
        rotated[:, 1] = s * offsets[:, 0] + c * offsets[:, 1]
        rotated[:, 2] = offsets[:, 2]
        return self.center + rotated


@dataclass(frozen=True)
class Rect2D:
    """Axis-aligned rectangle in continuous pixel coordinates."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError("rectangle extents must be ordered")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)


def _world_to_camera(point: np.ndarray, pose: CameraPose) -> np.ndarray:
    return pose.rotation.T @ (np.asarray(point, dtype=np.float64) - pose.translation)


def _pixel(x: float, y: float, z: float, intr: CameraIntrinsics) -> tuple[float, float]:
    return intr.cx + intr.fx * x / z, intr.cy + intr.fy * y / z


def project_point(point, intr: CameraIntrinsics, pose: CameraPose) -> tuple[float, float]:
    """Project a world point to image pixels (u, v).

    Raises BehindCamera when the point's camera depth is at or behind the
    near plane (0.01 m).
    """
    p_cam = _world_to_camera(point, pose)
    if p_cam[2] <= NEAR_PLANE:
        raise BehindCamera(f"point depth {p_cam[2]:.4f} m is behind the near plane")
    u, v = _pixel(p_cam[0], p_cam[1], p_cam[2], intr)
    return float(u), float(v)


def _clip_corners_to_near(corners_cam: np.ndarray) -> list[np.ndarray]:
    """Camera-frame box corners clipped against z = NEAR_PLANE.

    Returns corners in front of the plane plus the intersection points of
    box edges that cross it.  Empty only when every corner is behind.
    """
    z = corners_cam[:, 2]
    pts = [corners_cam[i] for i in range(8) if z[i] > NEAR_PLANE]
    for i, j in _CUBE_EDGES:
        if (z[i] > NEAR_PLANE) != (z[j] > NEAR_PLANE):
            f = (NEAR_PLANE - z[i]) / (z[j] - z[i])
            p = corners_cam[i] + f * (corners_cam[j] - corners_cam[i])
            p[2] = NEAR_PLANE
            pts.append(p)
    return pts


def project_box(box: OrientedBox3D, intr: CameraIntrinsics, pose: CameraPose) -> Rect2D:
    """Project an oriented box and return the bounding rectangle of its image.

    The rectangle bounds the projections of all corners in front of the near
    plane plus the near-plane intersection points of crossing edges.  It is
    NOT intersected with the image rectangle; overlap with the frame is the
    caller's concern (see `iosa`).

    Raises NotVisible when every corner lies at or behind the near plane.
    """
    corners_cam = np.array([_world_to_camera(c, pose) for c in box.corners()])
    pts = _clip_corners_to_near(corners_cam)
    if not pts:
        raise NotVisible("box lies entirely behind the camera")
    us, vs = [], []
    for p in pts:
        u, v = _pixel(p[0], p[1], p[2], intr)
        us.append(float(u))
        vs.append(float(v))
    return Rect2D(min(us), min(vs), max(us), max(vs))


def iosa(a: Rect2D, b: Rect2D) -> float:
    """Intersection area over the smaller rectangle's area, in [0, 1].

    Equals 1 when one rectangle contains the other.  By convention a
    degenerate (zero-area) rectangle yields 0: an empty projection carries
    no visual evidence.
    """
    smaller = min(a.area, b.area)
    if smaller <= 0.0:
        return 0.0
    inter_w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    inter_h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if inter_w <= 0.0 or inter_h <= 0.0:
        return 0.0
    return min(1.0, inter_w * inter_h / smaller)
