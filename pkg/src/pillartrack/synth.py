"""Synthetic sequences: a cuboid target moving through light clutter.

Each frame samples points on the five visible faces of the box (no
bottom) in the world frame, adds uniform clutter around it, and advances
the pose with a constant-velocity-plus-noise motion model.  Everything is
driven by one Generator, so sequences are fully reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ObjectState, normalize_angle
from .tracker import Frame


@dataclass
class TrackletParams:
    n_frames: int = 20
    size: tuple[float, float, float] = (1.8, 4.2, 1.6)   # (w, l, h)
    start_xy: tuple[float, float] = (0.0, 0.0)
    start_z: float = 0.0
    start_yaw: float = 0.0
    velocity: tuple[float, float] = (0.35, 0.0)          # meters per frame, world xy
    yaw_rate: float = 0.02                               # radians per frame
    trans_noise: float = 0.04
    yaw_noise: float = 0.01
    surface_points: int = 500
    clutter_points: int = 150
    clutter_margin: float = 3.0


def sample_box_surface(state: ObjectState, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points on the 5 visible faces (top and 4 sides, no bottom)."""
    w, l, h = state.w, state.l, state.h
    # face order: top, +x, -x, +y, -y with areas as weights
    areas = np.array([l * w, w * h, w * h, l * h, l * h])
    faces = rng.choice(5, size=n, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, size=n)
    v = rng.uniform(-0.5, 0.5, size=n)
    pts = np.empty((n, 3))
    top = faces == 0
    pts[top] = np.stack([u[top] * l, v[top] * w, np.full(top.sum(), h / 2.0)], axis=1)
    for face, (axis, sign) in enumerate([((1, 2), +1), ((1, 2), -1),
                                         ((0, 2), +1), ((0, 2), -1)], start=1):
        m = faces == face
        if not m.any():
            continue
        fixed = np.full(m.sum(), sign * (l if axis == (1, 2) else w) / 2.0)
        if axis == (1, 2):      # x fixed, vary y and z
            pts[m] = np.stack([fixed, u[m] * w, v[m] * h], axis=1)
        else:                   # y fixed, vary x and z
            pts[m] = np.stack([u[m] * l, fixed, v[m] * h], axis=1)
    c, s = math.cos(state.theta), math.sin(state.theta)
    world = np.empty_like(pts)
    world[:, 0] = c * pts[:, 0] - s * pts[:, 1] + state.x
    world[:, 1] = s * pts[:, 0] + c * pts[:, 1] + state.y
    world[:, 2] = pts[:, 2] + state.z
    return world


def gen_synthetic_tracklet(params: TrackletParams, rng: np.random.Generator) -> list[Frame]:
    """Frames with ground truth, following the motion model in ``params``."""
    w, l, h = params.size
    state = ObjectState(x=params.start_xy[0], y=params.start_xy[1], z=params.start_z,
                        w=w, l=l, h=h, theta=params.start_yaw)
    frames = []
    for _ in range(params.n_frames):
        surface = sample_box_surface(state, params.surface_points, rng)
        if params.clutter_points > 0:
            half = max(w, l) / 2.0 + params.clutter_margin
            lo = np.array([state.x - half, state.y - half, state.z - h / 2.0 - 0.5])
            hi = np.array([state.x + half, state.y + half, state.z + h / 2.0 + 0.5])
            clutter = rng.uniform(lo, hi, size=(params.clutter_points, 3))
            points = np.concatenate([surface, clutter], axis=0)
        else:
            points = surface
        frames.append(Frame(points=points, gt=state))
        state = state.with_center(
            state.x + params.velocity[0] + rng.normal(0.0, params.trans_noise),
            state.y + params.velocity[1] + rng.normal(0.0, params.trans_noise),
            state.z,
            normalize_angle(state.theta + params.yaw_rate + rng.normal(0.0, params.yaw_noise)),
        )
    return frames


def random_tracklet_params(rng: np.random.Generator, n_frames: int = 20) -> TrackletParams:
    """Car-scale variety: random size, heading, speed, and turn rate.

    Per-frame displacement stays within the pose-jitter range the tracker
    trains with, so test-time reference offsets are in-distribution.
    """
    w = rng.uniform(1.6, 2.0)
    l = rng.uniform(3.8, 4.6)
    h = rng.uniform(1.4, 1.8)
    heading = rng.uniform(-math.pi, math.pi)
    speed = rng.uniform(0.08, 0.24)
    return TrackletParams(
        n_frames=n_frames,
        size=(w, l, h),
        start_xy=(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)),
        start_z=rng.uniform(-0.3, 0.3),
        start_yaw=heading,
        velocity=(speed * math.cos(heading), speed * math.sin(heading)),
        yaw_rate=rng.uniform(-0.025, 0.025),
        trans_noise=0.03,
        surface_points=int(rng.integers(350, 650)),
        clutter_points=int(rng.integers(80, 220)),
    )
