"""End to end on synthetic data: overfit a small model, track, score.

Takes a couple of minutes on one CPU core.

Run:  python demos/05_train_track_evaluate.py
"""

import numpy as np

from pillartrack.config import Config
from pillartrack.metrics import ope_precision, ope_success
from pillartrack.synth import gen_synthetic_tracklet, random_tracklet_params
from pillartrack.tracker import track_sequence
from pillartrack.train import train

cfg = Config(feature_dim=16, max_steps=120, epochs=1000, batch_size=8, seed=7)
rng = np.random.default_rng(cfg.seed)
tracklets = [gen_synthetic_tracklet(random_tracklet_params(rng, 12), rng)
             for _ in range(2)]
print(f"training on {sum(len(t) - 1 for t in tracklets)} frame pairs...")

result = train(cfg, tracklets)
first = result.loss_rows[0]["l_final"]
last = np.mean([r["l_final"] for r in result.loss_rows[-10:]])
print(f"loss: {first:.3f} -> {last:.3f} over {result.steps} steps "
      f"({100 * (1 - last / first):.0f}% reduction)")

model = result.model.eval()
track_rng = np.random.default_rng(cfg.seed + 1)
for idx, frames in enumerate(tracklets):
    run = track_sequence(frames, frames[0].gt, model, track_rng,
                         n_template=cfg.n_template, n_search=cfg.n_search)
    print(f"tracklet {idx}: success {ope_success(run):5.1f}  "
          f"precision {ope_precision(run):5.1f}  "
          f"degenerate frames {sum(run.flags)}")
