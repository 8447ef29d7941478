"""Training objective: center focal loss, L1 regressions, deep supervision."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, absolute, clip, gather_cell, log
from .localization import BoxTargets
from .network import NetworkOutputs, TrackerModel

FOCAL_POS_EXP = 2.0    # exponent on (1 - p) at positive cells
FOCAL_NEG_EXP = 4.0    # exponent on (1 - y) penalty reduction at negatives
PRED_CLAMP = 1e-6


@dataclass
class LossBreakdown:
    """Scalar components of one sample's loss; ``total`` carries the graph."""

    l_center: float
    l_offrot: float
    l_z: float
    l_main: float
    l_deep: list[float] = field(default_factory=list)
    l_final: float = 0.0
    total: Tensor = None


def focal_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Penalty-reduced focal loss for a Gaussian heatmap target.

    Cells with target exactly 1 are positives; the rest are negatives
    down-weighted by (1 - y)^4.  Predictions are clamped away from {0, 1}
    before the logs.
    """
    target = np.asarray(target, dtype=pred.data.dtype)
    if target.shape != pred.data.shape:
        raise ValueError(f"target shape {target.shape} != prediction shape {pred.data.shape}")
    pos = target == 1.0
    n_pos = max(1, int(pos.sum()))
    neg_weight = np.where(pos, 0.0, (1.0 - target) ** FOCAL_NEG_EXP)

    p = clip(pred, PRED_CLAMP, 1.0 - PRED_CLAMP)
    pos_term = ((1.0 - p) ** FOCAL_POS_EXP * log(p) * pos.astype(target.dtype)).sum()
    neg_term = (p ** FOCAL_POS_EXP * log(1.0 - p) * neg_weight).sum()
    return -(pos_term + neg_term) * (1.0 / n_pos)


def l1_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean absolute error over the supervised components."""
    target = np.asarray(target, dtype=pred.data.dtype)
    if target.shape != pred.data.shape:
        raise ValueError(f"target shape {target.shape} != prediction shape {pred.data.shape}")
    return absolute(pred - target).sum() * (1.0 / pred.data.size)


def _stage_loss(model: TrackerModel, features: Tensor, coords: np.ndarray,
                targets: BoxTargets, lambda1: float, lambda2: float):
    """Localization loss of one feature set: lambda1*(center+offrot) + lambda2*z."""
    heads = model.localize(features, coords)
    i, j = targets.cell
    l_center = focal_loss(heads.center_heatmap, targets.heatmap)
    pred_offrot = gather_cell(heads.offset_rot, j, i)
    l_offrot = l1_loss(pred_offrot, np.array([targets.offset[0], targets.offset[1],
                                              targets.rotation]))
    pred_z = gather_cell(heads.z_map, j, i)
    l_z = l1_loss(pred_z, np.array([targets.z]))
    total = lambda1 * (l_center + l_offrot) + lambda2 * l_z
    return total, l_center, l_offrot, l_z


def total_loss(model: TrackerModel, outputs: NetworkOutputs, coords: np.ndarray,
               targets: BoxTargets, lambda1: float = 1.0, lambda2: float = 2.0,
               alpha: float = 0.1) -> LossBreakdown:
    """Main localization loss plus alpha-weighted deep supervision.

    The main branch reads the dense localization input; deep branches run
    the shared localization on each stage output except the last.  With
    ``alpha`` zero the deep branches are skipped entirely.
    """
    main, l_center, l_offrot, l_z = _stage_loss(model, outputs.search_loc_input,
                                                coords, targets, lambda1, lambda2)
    deep_terms: list[Tensor] = []
    if alpha != 0.0:
        for feats in outputs.search_per_stage[:-1]:
            stage_total, _, _, _ = _stage_loss(model, feats, coords, targets,
                                               lambda1, lambda2)
            deep_terms.append(stage_total)

    if deep_terms:
        deep_sum = deep_terms[0]
        for term in deep_terms[1:]:
            deep_sum = deep_sum + term
        final = main + alpha * deep_sum
    else:
        final = main

    return LossBreakdown(
        l_center=float(l_center.data),
        l_offrot=float(l_offrot.data),
        l_z=float(l_z.data),
        l_main=float(main.data),
        l_deep=[float(t.data) for t in deep_terms],
        l_final=float(final.data),
        total=final,
    )
