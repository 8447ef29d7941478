"""One-pass evaluation: rotated-box IoU, center distance, Success/Precision.

Success is the mean of the success-plot samples: for IoU thresholds tau in
{0, 0.01, ..., 1.0}, the fraction of frames with IoU > tau (an exact match,
IoU == 1, also counts at tau = 1, so a perfect run scores 100).  Precision
is the mean over distance thresholds {0, 0.1, ..., 2.0 m} of the fraction
of frames with 3D center distance <= d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ObjectState, bev_corners

SUCCESS_THRESHOLDS = 101
PRECISION_THRESHOLDS = 21
PRECISION_MAX_DISTANCE = 2.0


@dataclass
class TrackRun:
    """Aligned per-frame predictions and ground truths of one sequence."""

    predictions: list[ObjectState]
    ground_truths: list[ObjectState]
    flags: list[bool] = field(default_factory=list)   # per-frame degeneracy

    def __post_init__(self):
        if len(self.predictions) != len(self.ground_truths) or not self.predictions:
            raise ValueError("predictions and ground truths must align and be non-empty")
        if not self.flags:
            self.flags = [False] * len(self.predictions)

    def __len__(self) -> int:
        return len(self.predictions)


def _clip_polygon(poly: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Keep the part of a convex polygon left of the directed edge a -> b."""
    out = []
    n = len(poly)
    ab = b - a
    for idx in range(n):
        p, q = poly[idx], poly[(idx + 1) % n]
        sp = ab[0] * (p[1] - a[1]) - ab[1] * (p[0] - a[0])
        sq = ab[0] * (q[1] - a[1]) - ab[1] * (q[0] - a[0])
        if sp >= 0.0:
            out.append(p)
        if (sp > 0.0 and sq < 0.0) or (sp < 0.0 and sq > 0.0):
            t = sp / (sp - sq)
            out.append(p + t * (q - p))
    return np.array(out) if out else np.zeros((0, 2))


def _polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def bev_intersection_area(a: ObjectState, b: ObjectState) -> float:
    """Footprint overlap of two yaw-rotated rectangles via convex clipping."""
    poly = bev_corners(a)
    clip_poly = bev_corners(b)
    for idx in range(4):
        poly = _clip_polygon(poly, clip_poly[idx], clip_poly[(idx + 1) % 4])
        if len(poly) == 0:
            return 0.0
    return _polygon_area(poly)


def iou3d(a: ObjectState, b: ObjectState) -> float:
    """Volume IoU of two oriented boxes (BEV overlap times z overlap)."""
    if (a.x, a.y, a.z, a.w, a.l, a.h, a.theta) == (b.x, b.y, b.z, b.w, b.l, b.h, b.theta):
        return 1.0   # exact-match limit, independent of corner rounding
    inter_bev = bev_intersection_area(a, b)
    if inter_bev == 0.0:
        return 0.0
    z_over = min(a.z + a.h / 2.0, b.z + b.h / 2.0) - max(a.z - a.h / 2.0, b.z - b.h / 2.0)
    if z_over <= 0.0:
        return 0.0
    inter = inter_bev * z_over
    union = a.volume() + b.volume() - inter
    return float(min(1.0, max(0.0, inter / union)))


def center_distance(a: ObjectState, b: ObjectState) -> float:
    """Euclidean distance between the 3D box centers."""
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2)


def run_ious(run: TrackRun) -> np.ndarray:
    return np.array([iou3d(p, g) for p, g in zip(run.predictions, run.ground_truths)])


def run_distances(run: TrackRun) -> np.ndarray:
    return np.array([center_distance(p, g)
                     for p, g in zip(run.predictions, run.ground_truths)])


def success_curve(ious: np.ndarray, n_thresholds: int = SUCCESS_THRESHOLDS):
    """(thresholds, fraction of frames with IoU above each threshold)."""
    taus = np.linspace(0.0, 1.0, n_thresholds)
    ious = np.asarray(ious)
    hits = (ious[None, :] > taus[:, None]) | (ious[None, :] == 1.0)
    return taus, hits.mean(axis=1)


def precision_curve(dists: np.ndarray, n_thresholds: int = PRECISION_THRESHOLDS,
                    max_distance: float = PRECISION_MAX_DISTANCE):
    """(thresholds, fraction of frames with center distance within each)."""
    ds = np.linspace(0.0, max_distance, n_thresholds)
    dists = np.asarray(dists)
    hits = dists[None, :] <= ds[:, None]
    return ds, hits.mean(axis=1)


def ope_success(run: TrackRun, n_thresholds: int = SUCCESS_THRESHOLDS) -> float:
    _, fractions = success_curve(run_ious(run), n_thresholds)
    return 100.0 * float(fractions.mean())


def ope_precision(run: TrackRun, n_thresholds: int = PRECISION_THRESHOLDS,
                  max_distance: float = PRECISION_MAX_DISTANCE) -> float:
    _, fractions = precision_curve(run_distances(run), n_thresholds, max_distance)
    return 100.0 * float(fractions.mean())


def aggregate(values, weights) -> tuple[float, float]:
    """Frame-count-weighted mean of per-category (success, precision) pairs."""
    values = list(values)
    weights = [float(w) for w in weights]
    if not values or len(values) != len(weights):
        raise ValueError("need one weight per (success, precision) pair")
    total = sum(weights)
    succ = sum(v[0] * w for v, w in zip(values, weights)) / total
    prec = sum(v[1] * w for v, w in zip(values, weights)) / total
    return succ, prec
