"""From a raw point cloud to decorated, embedded, pooled pillars.

Run:  python demos/02_pillars_from_points.py
"""

import numpy as np

from pillartrack.pillars import (GridSpec, PillarEncoder, build_pillar_set,
                                 decorate, resample_points, voxelize_dynamic)

rng = np.random.default_rng(1)
grid = GridSpec()                       # 0.3 m cells over (-4.8, 4.8) m
print(f"grid: {grid.nx} x {grid.ny} cells of {grid.cell} m")

# A round blob of points plus some stragglers outside the crop.
cloud = np.concatenate([
    rng.normal(0.0, 1.2, size=(400, 3)) * [1.0, 1.0, 0.3],
    rng.uniform(4.0, 8.0, size=(30, 3)),
])

pts = resample_points(cloud, 512, rng)
print(f"resampled          {cloud.shape[0]} -> {pts.shape[0]} points")

kept, pillar_of, coords = voxelize_dynamic(pts, grid)
print(f"voxelized          {kept.shape[0]} in-range points in {coords.shape[0]} pillars")

decorated = decorate(kept, pillar_of, coords, grid)
print(f"decoration         {decorated.shape[1]} dims: xyz, offsets from pillar mean, "
      "offsets from cell center")
means = np.zeros((coords.shape[0], 3))
np.add.at(means, pillar_of, decorated[:, 3:6])
print(f"per-pillar mean of the offset columns: {np.abs(means).max():.2e} (vanishes)")

pnet = PillarEncoder.create(32, rng)
pillars = build_pillar_set(cloud, grid, pnet, 512, rng, training=False)
print(f"pillar set         {pillars.count} pillars, features {pillars.features.shape}, "
      f"all >= 0: {(pillars.features.data >= 0).all()}")
