"""Sparse pillar construction: resample, voxelize, decorate, embed, pool."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, Parameter, batchnorm, linear, maxpool_set, relu


class EmptyRegionError(RuntimeError):
    """No points survive cropping/voxelization; the tracker handles this."""


@dataclass(frozen=True)
class GridSpec:
    """Evenly spaced xy grid over a local crop; pillars span all of z.

    Ranges are half-open in meters; ``z_range`` only clips points and
    provides the pillar-center z (its midpoint).
    """

    cell: float = 0.3
    x_range: tuple[float, float] = (-4.8, 4.8)
    y_range: tuple[float, float] = (-4.8, 4.8)
    z_range: tuple[float, float] = (-1.5, 1.5)

    def __post_init__(self):
        if self.cell <= 0:
            raise ValueError("cell size must be positive")
        for lo, hi in (self.x_range, self.y_range, self.z_range):
            if not hi > lo:
                raise ValueError("ranges must be non-empty")

    @property
    def nx(self) -> int:
        # the small epsilon keeps exact-multiple spans from rounding up
        return max(1, int(math.ceil((self.x_range[1] - self.x_range[0]) / self.cell - 1e-9)))

    @property
    def ny(self) -> int:
        return max(1, int(math.ceil((self.y_range[1] - self.y_range[0]) / self.cell - 1e-9)))

    @property
    def z_mid(self) -> float:
        return 0.5 * (self.z_range[0] + self.z_range[1])

    def cell_center(self, coords: np.ndarray) -> np.ndarray:
        """Metric xy centers for (M, 2) integer cell indices."""
        coords = np.asarray(coords)
        cx = self.x_range[0] + (coords[:, 0] + 0.5) * self.cell
        cy = self.y_range[0] + (coords[:, 1] + 0.5) * self.cell
        return np.stack([cx, cy], axis=1)


@dataclass
class PillarEncoder:
    """Per-point embedding: linear (9 -> C), batch norm, ReLU.

    Weights are shared between the Siamese branches, but each branch keeps
    its own batch-norm running statistics: template crops (bare object
    boxes) and search crops (enlarged regions) have very different point
    distributions, and inference normalizes with running stats only.
    """

    weight: Parameter
    bias: Parameter
    bn_gamma: Parameter
    bn_beta: Parameter
    bn_stats: dict

    @classmethod
    def create(cls, feature_dim: int, rng: np.random.Generator, dtype=np.float64,
               prefix: str = "pnet") -> "PillarEncoder":
        scale = 1.0 / math.sqrt(9.0)
        stats = {branch: (np.zeros(feature_dim, dtype=dtype),
                          np.ones(feature_dim, dtype=dtype))
                 for branch in ("template", "search")}
        return cls(
            weight=Parameter(f"{prefix}.weight", rng.normal(0.0, scale, (9, feature_dim)), dtype=dtype),
            bias=Parameter(f"{prefix}.bias", np.zeros(feature_dim), dtype=dtype),
            bn_gamma=Parameter(f"{prefix}.bn_gamma", np.ones(feature_dim), dtype=dtype),
            bn_beta=Parameter(f"{prefix}.bn_beta", np.zeros(feature_dim), dtype=dtype),
            bn_stats=stats,
        )

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias, self.bn_gamma, self.bn_beta]

    def buffers(self) -> dict[str, np.ndarray]:
        name = self.weight.name.rsplit(".", 1)[0]
        out = {}
        for branch, (mean, var) in self.bn_stats.items():
            out[f"{name}.bn_mean_{branch}"] = mean
            out[f"{name}.bn_var_{branch}"] = var
        return out


@dataclass
class PillarSet:
    """Non-empty pillars: integer cell coords, metric centers, features."""

    coords: np.ndarray            # (M, 2) int, unique, (i, j)
    centers_xy: np.ndarray        # (M, 2) float
    features: Tensor              # (M, C)
    grid: GridSpec = field(repr=False, default=GridSpec())

    @property
    def count(self) -> int:
        return self.coords.shape[0]


def resample_points(points: np.ndarray, target: int, rng: np.random.Generator) -> np.ndarray:
    """Return exactly ``target`` points: subsample without replacement, or
    keep all originals and top up with replacement."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n == 0:
        raise EmptyRegionError("cannot resample an empty point set")
    if n >= target:
        idx = rng.choice(n, size=target, replace=False)
    else:
        extra = rng.choice(n, size=target - n, replace=True)
        idx = np.concatenate([np.arange(n), extra])
    return points[idx]


def voxelize_dynamic(points: np.ndarray, grid: GridSpec):
    """Assign in-range points to cells; no per-cell cap, no dropped insiders.

    Returns ``(kept_points, pillar_of, coords)`` where ``coords`` is the
    (M, 2) array of unique cells and ``pillar_of`` maps each kept point to
    its row in ``coords``.  Kept points come back re-ordered canonically
    (by pillar, then xyz) so downstream reductions are permutation-exact.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError(f"points must be (N, 3), got {points.shape}")
    (x0, x1), (y0, y1), (z0, z1) = grid.x_range, grid.y_range, grid.z_range
    keep = ((points[:, 0] >= x0) & (points[:, 0] < x1)
            & (points[:, 1] >= y0) & (points[:, 1] < y1)
            & (points[:, 2] >= z0) & (points[:, 2] < z1))
    pts = points[keep]
    if pts.shape[0] == 0:
        raise EmptyRegionError("no points inside the grid ranges")
    ix = np.minimum(np.floor((pts[:, 0] - x0) / grid.cell).astype(np.int64), grid.nx - 1)
    iy = np.minimum(np.floor((pts[:, 1] - y0) / grid.cell).astype(np.int64), grid.ny - 1)
    # flat ids keep np.unique one-dimensional (and coords sorted by (i, j))
    flat = ix * grid.ny + iy
    unique_flat, pillar_of = np.unique(flat, return_inverse=True)
    coords = np.stack([unique_flat // grid.ny, unique_flat % grid.ny], axis=1)
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0], pillar_of))
    return pts[order], pillar_of[order], coords


def decorate(points: np.ndarray, pillar_of: np.ndarray, coords: np.ndarray,
             grid: GridSpec) -> np.ndarray:
    """Augment each point to 9 dims: raw xyz, offsets from the per-pillar
    point mean, offsets from the pillar center (z center = z-range mid)."""
    n = points.shape[0]
    m = coords.shape[0]
    sums = np.zeros((m, 3), dtype=np.float64)
    np.add.at(sums, pillar_of, points)
    counts = np.bincount(pillar_of, minlength=m).astype(np.float64)
    means = sums / counts[:, None]

    centers_xy = grid.cell_center(coords)
    out = np.empty((n, 9), dtype=np.float64)
    out[:, 0:3] = points
    out[:, 3:6] = points - means[pillar_of]
    out[:, 6:8] = points[:, 0:2] - centers_xy[pillar_of]
    out[:, 8] = points[:, 2] - grid.z_mid
    return out


def embed_points(decorated: np.ndarray, pnet: PillarEncoder, training: bool,
                 branch: str = "search", dtype=np.float64) -> Tensor:
    """Per-point feature: relu(batchnorm(linear(decorated)))."""
    x = Tensor(decorated, dtype=dtype)
    h = linear(x, pnet.weight, pnet.bias)
    mean, var = pnet.bn_stats[branch]
    h = batchnorm(h, pnet.bn_gamma, pnet.bn_beta, mean, var, training=training)
    return relu(h)


def build_pillar_set(cloud: np.ndarray, grid: GridSpec, pnet: PillarEncoder,
                     target_count: int, rng: np.random.Generator,
                     training: bool = False, branch: str = "search",
                     dtype=np.float64) -> PillarSet:
    """Full pipeline: resample -> voxelize -> decorate -> embed -> max-pool."""
    pts = resample_points(cloud, target_count, rng)
    pts, pillar_of, coords = voxelize_dynamic(pts, grid)
    decorated = decorate(pts, pillar_of, coords, grid)
    point_feats = embed_points(decorated, pnet, training=training, branch=branch,
                               dtype=dtype)
    pillar_feats = maxpool_set(point_feats, pillar_of, coords.shape[0])
    return PillarSet(coords=coords, centers_xy=grid.cell_center(coords),
                     features=pillar_feats, grid=grid)
