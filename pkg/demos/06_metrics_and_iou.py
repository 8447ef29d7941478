"""Rotated-box IoU against Monte-Carlo, and the Success/Precision scores.

Run:  python demos/06_metrics_and_iou.py
"""

import math

import numpy as np

from pillartrack.geometry import ObjectState
from pillartrack.metrics import (TrackRun, iou3d, ope_precision, ope_success,
                                 precision_curve, success_curve, run_ious,
                                 run_distances)
from pillartrack.oracles import monte_carlo_iou3d

rng = np.random.default_rng(4)

# Polygon-clipping IoU vs brute-force sampling.
a = ObjectState(x=0.0, y=0.0, z=0.0, w=1.8, l=4.2, h=1.6, theta=0.4)
b = ObjectState(x=0.8, y=-0.5, z=0.2, w=2.0, l=3.9, h=1.5, theta=-0.3)
exact = iou3d(a, b)
mc = monte_carlo_iou3d(((a.x, a.y, a.z), (a.l, a.w, a.h), a.theta),
                       ((b.x, b.y, b.z), (b.l, b.w, b.h), b.theta),
                       n_samples=1_000_000, rng=rng)
print(f"clipping IoU {exact:.5f}  monte-carlo {mc:.5f}  |diff| {abs(exact - mc):.2e}")

# Two axis-aligned unit cubes offset by half a side: IoU = 1/3 exactly.
ua = ObjectState(x=0, y=0, z=0, w=1, l=1, h=1, theta=0)
ub = ObjectState(x=0.5, y=0, z=0, w=1, l=1, h=1, theta=0)
print(f"unit cubes offset 0.5: IoU = {iou3d(ua, ub):.12f} (1/3)")

# A hand-made run and its one-pass-evaluation scores.
gt = [ObjectState(x=0.4 * t, y=0.0, z=0.0, w=1.8, l=4.2, h=1.6, theta=0.05 * t)
      for t in range(12)]
noisy = [ObjectState(x=s.x + rng.normal(0, 0.25), y=s.y + rng.normal(0, 0.25),
                     z=s.z + rng.normal(0, 0.08), w=s.w, l=s.l, h=s.h,
                     theta=s.theta + rng.normal(0, 0.05)) for s in gt]
run = TrackRun(predictions=noisy, ground_truths=gt)
print(f"noisy run: success {ope_success(run):.1f}  precision {ope_precision(run):.1f}")

taus, frac = success_curve(run_ious(run))
print("success curve samples (tau, fraction):",
      [(round(float(t), 2), round(float(f), 2)) for t, f in
       zip(taus[::25], frac[::25])])
ds, pfrac = precision_curve(run_distances(run))
print("precision curve samples (d, fraction):",
      [(round(float(d), 2), round(float(f), 2)) for d, f in
       zip(ds[::5], pfrac[::5])])
