"""Oriented 3D boxes and the coordinate-frame transforms around them."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    theta = math.fmod(theta, 2.0 * math.pi)
    if theta <= -math.pi:
        theta += 2.0 * math.pi
    elif theta > math.pi:
        theta -= 2.0 * math.pi
    return theta


@dataclass
class ObjectState:
    """7-DoF oriented box: center (x, y, z), size (w, l, h), yaw theta.

    ``l`` runs along the heading axis, ``w`` across it.  Sizes must be
    positive; theta is normalized into (-pi, pi] on construction.
    """

    x: float
    y: float
    z: float
    w: float
    l: float
    h: float
    theta: float

    def __post_init__(self):
        if not (self.w > 0 and self.l > 0 and self.h > 0):
            raise ValueError(f"box sizes must be positive, got {(self.w, self.l, self.h)}")
        self.theta = normalize_angle(self.theta)

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    @property
    def size(self) -> tuple[float, float, float]:
        return (self.w, self.l, self.h)

    def volume(self) -> float:
        return self.w * self.l * self.h

    def with_center(self, x, y, z, theta) -> "ObjectState":
        return replace(self, x=float(x), y=float(y), z=float(z), theta=float(theta))


def rotate_xy(points: np.ndarray, theta: float) -> np.ndarray:
    """Rotate the xy components of (N, 3) points about the z axis."""
    c, s = math.cos(theta), math.sin(theta)
    out = np.array(points, dtype=np.float64, copy=True)
    x = points[:, 0]
    y = points[:, 1]
    out[:, 0] = c * x - s * y
    out[:, 1] = s * x + c * y
    return out


def box_contains(points: np.ndarray, box: ObjectState, enlarge: float = 0.0) -> np.ndarray:
    """Boolean mask of points inside the box grown by ``enlarge`` per face.

    A point is kept iff, in the box frame, |px| <= l/2+e, |py| <= w/2+e,
    |pz| <= h/2+e.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        return np.zeros(0, dtype=bool)
    d = points - box.center
    c, s = math.cos(box.theta), math.sin(box.theta)
    px = c * d[:, 0] + s * d[:, 1]
    py = -s * d[:, 0] + c * d[:, 1]
    return ((np.abs(px) <= box.l / 2.0 + enlarge)
            & (np.abs(py) <= box.w / 2.0 + enlarge)
            & (np.abs(d[:, 2]) <= box.h / 2.0 + enlarge))


def points_in_box(points: np.ndarray, box: ObjectState, enlarge: float = 0.0) -> np.ndarray:
    """Subset of points inside the (enlarged) box."""
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        return points.reshape(0, 3)
    return points[box_contains(points, box, enlarge)]


def canonicalize_points(points: np.ndarray, ref: ObjectState) -> np.ndarray:
    """Express points in the reference-box frame (translate, rotate by -yaw)."""
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        return points.reshape(0, 3)
    shifted = points - ref.center
    return rotate_xy(shifted, -ref.theta)


def canonical_state(state: ObjectState, ref: ObjectState) -> ObjectState:
    """The state as seen from the reference-box frame."""
    d = state.center - ref.center
    c, s = math.cos(ref.theta), math.sin(ref.theta)
    return state.with_center(
        c * d[0] + s * d[1],
        -s * d[0] + c * d[1],
        d[2],
        normalize_angle(state.theta - ref.theta),
    )


def decanonicalize_state(state: ObjectState, ref: ObjectState) -> ObjectState:
    """Inverse of :func:`canonical_state`."""
    c, s = math.cos(ref.theta), math.sin(ref.theta)
    return state.with_center(
        c * state.x - s * state.y + ref.x,
        s * state.x + c * state.y + ref.y,
        state.z + ref.z,
        normalize_angle(state.theta + ref.theta),
    )


def random_shift(state: ObjectState, rng: np.random.Generator,
                 shift_xy: float = 0.3, shift_z: float = 0.1,
                 shift_yaw: float = 0.1) -> ObjectState:
    """Jitter the pose uniformly within the given half-widths; sizes kept."""
    dx, dy = rng.uniform(-shift_xy, shift_xy, size=2)
    dz = rng.uniform(-shift_z, shift_z)
    dth = rng.uniform(-shift_yaw, shift_yaw)
    return state.with_center(state.x + dx, state.y + dy, state.z + dz,
                             normalize_angle(state.theta + dth))


def bev_corners(box: ObjectState) -> np.ndarray:
    """The 4 corners of the box footprint in world xy, counter-clockwise."""
    hl, hw = box.l / 2.0, box.w / 2.0
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]], dtype=np.float64)
    c, s = math.cos(box.theta), math.sin(box.theta)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([box.x, box.y])
