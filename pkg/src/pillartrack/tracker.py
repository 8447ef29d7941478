"""Template/search construction and the frame-by-frame tracking loop.

Template crops are expressed in their own box frames before merging, so
the object is centered regardless of where it sits in the world; search
crops are expressed in the reference-box frame, and the network predicts
the residual pose there.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .geometry import (ObjectState, canonical_state, canonicalize_points,
                       points_in_box, random_shift)
from .localization import decode_box, encode_targets
from .metrics import TrackRun
from .network import TrackerModel
from .pillars import EmptyRegionError, resample_points


@dataclass
class Frame:
    """One LIDAR sweep with an optional ground-truth box."""

    points: np.ndarray
    gt: Optional[ObjectState] = None


@dataclass
class TrainSample:
    """Canonical-frame training pair with exact point counts."""

    template_points: np.ndarray   # (n_template, 3)
    search_points: np.ndarray     # (n_search, 3)
    gt_canonical: ObjectState     # target pose in the reference frame
    reference: ObjectState        # the shifted current-frame box


def make_train_sample(first: Frame, prev: Frame, cur: Frame,
                      rng: np.random.Generator, n_template: int = 512,
                      n_search: int = 1024, enlarge: float = 2.0,
                      shift_xy: float = 0.3, shift_z: float = 0.1,
                      shift_yaw: float = 0.1) -> Optional[TrainSample]:
    """Build one training sample from a (t-1, t) frame pair.

    The template merges the first-frame ground-truth crop with a randomly
    shifted previous-frame crop; the search region is the shifted current
    box enlarged per face.  Returns None when either point set is empty
    (the caller counts skips).
    """
    shifted_prev = random_shift(prev.gt, rng, shift_xy, shift_z, shift_yaw)
    shifted_cur = random_shift(cur.gt, rng, shift_xy, shift_z, shift_yaw)

    tpl_first = canonicalize_points(points_in_box(first.points, first.gt), first.gt)
    tpl_prev = canonicalize_points(points_in_box(prev.points, shifted_prev), shifted_prev)
    template = np.concatenate([tpl_first, tpl_prev], axis=0)
    if template.shape[0] == 0:
        return None

    search_world = points_in_box(cur.points, shifted_cur, enlarge=enlarge)
    if search_world.shape[0] == 0:
        return None
    search = canonicalize_points(search_world, shifted_cur)

    return TrainSample(
        template_points=resample_points(template, n_template, rng),
        search_points=resample_points(search, n_search, rng),
        gt_canonical=canonical_state(cur.gt, shifted_cur),
        reference=shifted_cur,
    )


def sample_targets(sample: TrainSample, grid):
    """Encode the canonical ground truth of a sample for supervision."""
    return encode_targets(sample.gt_canonical, grid)


def track_sequence(frames: list[Frame], initial_gt: ObjectState,
                   model: TrackerModel, rng: np.random.Generator,
                   n_template: int = 512, n_search: int = 1024,
                   enlarge: float = 2.0) -> TrackRun:
    """Run the tracker over a sequence, seeded by the first-frame box.

    Frame 0 is the initial ground truth.  Later frames crop the template
    from the first-frame box and the previous prediction, crop the search
    region around the previous prediction enlarged per face, and decode a
    new pose.  Empty regions carry the previous state forward and flag the
    frame; box sizes stay those of the initial ground truth throughout.
    """
    if not frames:
        raise ValueError("need at least one frame")
    model.eval()
    sizes = (initial_gt.w, initial_gt.l, initial_gt.h)
    predictions = [replace(initial_gt)]
    flags = [False]

    first_crop = canonicalize_points(points_in_box(frames[0].points, initial_gt),
                                     initial_gt)

    for t in range(1, len(frames)):
        ref = predictions[t - 1]
        prev_crop = canonicalize_points(points_in_box(frames[t - 1].points, ref), ref)
        template = np.concatenate([first_crop, prev_crop], axis=0)
        search_world = points_in_box(frames[t].points, ref, enlarge=enlarge)
        try:
            # build_pillars resamples to the exact counts itself
            tpl_set = model.build_pillars(template, n_template, rng,
                                          branch="template")
            srch_set = model.build_pillars(canonicalize_points(search_world, ref),
                                           n_search, rng)
            outputs = model.forward(tpl_set, srch_set)
            heads = model.localize(outputs.search_loc_input, srch_set.coords)
            pred = decode_box(heads, model.grid, ref, sizes)
            predictions.append(pred)
            flags.append(False)
        except EmptyRegionError:
            predictions.append(replace(ref))
            flags.append(True)

    ground_truths = [f.gt for f in frames]
    return TrackRun(predictions=predictions, ground_truths=ground_truths, flags=flags)
