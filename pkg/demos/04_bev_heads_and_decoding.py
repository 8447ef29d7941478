"""BEV scatter, the dense conv block, heads, and box encode/decode.

Run:  python demos/04_bev_heads_and_decoding.py
"""

import numpy as np

from pillartrack.autodiff import Tensor
from pillartrack.geometry import ObjectState
from pillartrack.localization import (LocalizationParams, decode_box,
                                      dense_conv_block, encode_targets,
                                      run_heads, scatter_to_bev,
                                      targets_as_heads)
from pillartrack.pillars import GridSpec

rng = np.random.default_rng(3)
grid = GridSpec()

# Sparse pillars become a mostly-zero dense map; the dense conv block
# fills the holes while keeping an exact skip to the input.
m = 25
cells = rng.permutation(grid.nx * grid.ny)[:m]
coords = np.stack([cells % grid.nx, cells // grid.nx], axis=1)
feats = Tensor(rng.normal(size=(m, 16)))
bev = scatter_to_bev(feats, coords, grid)
print(f"scatter: {m} pillars -> map {bev.data.shape}, "
      f"nonzero cells {np.count_nonzero(np.abs(bev.data).sum(axis=0))}")

loc = LocalizationParams.create(16, rng)
filled = dense_conv_block(bev, loc.convs)
print(f"dense conv block: nonzero cells now "
      f"{np.count_nonzero(np.abs(filled.data).sum(axis=0))} (holes filled)")

heads = run_heads(filled, loc)
print(f"heatmap in (0,1): ({heads.center_heatmap.data.min():.4f}, "
      f"{heads.center_heatmap.data.max():.4f})")

# Encoding a ground-truth box and decoding it back is the identity.
gt = ObjectState(x=1.23, y=-0.78, z=0.21, w=1.8, l=4.2, h=1.6, theta=0.35)
targets = encode_targets(gt, grid)
print(f"target cell {targets.cell}, offsets ({targets.offset[0]:.3f}, "
      f"{targets.offset[1]:.3f}), peak value "
      f"{targets.heatmap.max():.1f}")
reference = ObjectState(x=10.0, y=5.0, z=-0.5, w=1.8, l=4.2, h=1.6, theta=1.1)
decoded = decode_box(targets_as_heads(targets, grid), grid, reference,
                     (gt.w, gt.l, gt.h))
from pillartrack.geometry import decanonicalize_state
expected = decanonicalize_state(gt, reference)
err = max(abs(decoded.x - expected.x), abs(decoded.y - expected.y),
          abs(decoded.z - expected.z), abs(decoded.theta - expected.theta))
print(f"encode -> decode round trip error: {err:.2e} m")
