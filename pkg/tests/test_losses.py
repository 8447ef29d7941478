import math

import numpy as np
import pytest

from pillartrack.autodiff import Parameter, Tensor, grad_check, sigmoid
from pillartrack.config import Config
from pillartrack.losses import focal_loss, l1_loss, total_loss
from pillartrack.network import TrackerModel
from pillartrack.pillars import GridSpec, PillarSet
from pillartrack.localization import encode_targets
from pillartrack.geometry import ObjectState


def _near_perfect_heatmap(target):
    pred = np.where(target == 1.0, 1.0 - 1e-6, 1e-6)
    return Tensor(pred)


def test_focal_near_perfect_prediction_tiny():
    target = np.zeros((1, 8, 8))
    target[0, 3, 3] = 1.0
    loss = focal_loss(_near_perfect_heatmap(target), target)
    assert float(loss.data) < 1e-4


def test_focal_hand_evaluated_single_cell():
    target = np.ones((1, 1, 1))
    pred = Tensor(np.full((1, 1, 1), 0.5))
    loss = focal_loss(pred, target)
    expected = -(0.5 ** 2) * math.log(0.5)
    assert abs(float(loss.data) - expected) < 1e-12
    assert abs(float(loss.data) - 0.1733) < 1e-4


def test_focal_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    logits = Parameter("logits", rng.normal(size=(1, 8, 8)))
    target = np.exp(-rng.uniform(0.0, 6.0, size=(1, 8, 8)))
    target[0, 5, 2] = 1.0
    err = grad_check(lambda: focal_loss(sigmoid(logits), target), [logits],
                     probes_per_param=30, rng=np.random.default_rng(1))
    assert err < 1e-5


def test_focal_nonnegative_random():
    rng = np.random.default_rng(2)
    for _ in range(10):
        target = np.exp(-rng.uniform(0.0, 6.0, size=(1, 5, 5)))
        target[0, 2, 2] = 1.0
        pred = Tensor(rng.uniform(0.01, 0.99, size=(1, 5, 5)))
        assert float(focal_loss(pred, target).data) >= 0.0


def test_l1_zero_when_equal():
    pred = Tensor(np.array([0.3, -0.7, 2.0]))
    assert float(l1_loss(pred, pred.data.copy()).data) == 0.0


def test_l1_hand_value():
    pred = Tensor(np.array([0.5, -0.5, 0.0]))
    target = np.zeros(3)
    assert abs(float(l1_loss(pred, target).data) - 1.0 / 3.0) < 1e-12


def test_l1_gradient_sign_pattern():
    pred = Parameter("pred", np.array([1.0, -2.0, 0.5]))
    target = np.array([0.5, -1.0, 1.5])
    l1_loss(pred, target).backward()
    np.testing.assert_allclose(pred.grad, np.array([1.0, -1.0, -1.0]) / 3.0)


def _tiny_model(stages=2, alpha=0.1, multi=True):
    grid = GridSpec(cell=1.0, x_range=(-4.0, 4.0), y_range=(-4.0, 4.0),
                    z_range=(-1.5, 1.5))
    model = TrackerModel(feature_dim=8, num_stages=stages, grid=grid, seed=0,
                         multi_correlation=multi)
    rng = np.random.default_rng(3)
    cells = rng.permutation(grid.nx * grid.ny)

    def pset(m, seed):
        r = np.random.default_rng(seed)
        chosen = cells[:m]
        coords = np.stack([chosen % grid.nx, chosen // grid.nx], axis=1)
        return PillarSet(coords=coords, centers_xy=grid.cell_center(coords),
                         features=Tensor(r.normal(size=(m, 8))), grid=grid)

    tpl, srch = pset(6, 4), pset(10, 5)
    gt = ObjectState(x=0.4, y=-0.6, z=0.1, w=1.8, l=4.2, h=1.5, theta=0.15)
    targets = encode_targets(gt, grid)
    return model, tpl, srch, targets


def test_total_loss_single_stage_no_deep_terms():
    model, tpl, srch, targets = _tiny_model(stages=1)
    out = model.forward(tpl, srch)
    breakdown = total_loss(model, out, srch.coords, targets, alpha=0.1)
    assert breakdown.l_deep == []
    assert breakdown.l_final == breakdown.l_main


def test_total_loss_alpha_zero_equals_main():
    model, tpl, srch, targets = _tiny_model(stages=3)
    out = model.forward(tpl, srch)
    breakdown = total_loss(model, out, srch.coords, targets, alpha=0.0)
    assert breakdown.l_deep == []
    assert breakdown.l_final == breakdown.l_main


def test_total_loss_exact_recomposition():
    model, tpl, srch, targets = _tiny_model(stages=3)
    out = model.forward(tpl, srch)
    lam1, lam2, alpha = 1.0, 2.0, 0.1
    breakdown = total_loss(model, out, srch.coords, targets,
                           lambda1=lam1, lambda2=lam2, alpha=alpha)
    assert len(breakdown.l_deep) == 2
    # identical left-fold arithmetic must reproduce the stored values exactly
    assert breakdown.l_main == lam1 * (breakdown.l_center + breakdown.l_offrot) + lam2 * breakdown.l_z
    deep_sum = breakdown.l_deep[0]
    for term in breakdown.l_deep[1:]:
        deep_sum = deep_sum + term
    assert breakdown.l_final == breakdown.l_main + alpha * deep_sum


def test_total_loss_components_nonnegative():
    model, tpl, srch, targets = _tiny_model(stages=2)
    out = model.forward(tpl, srch)
    b = total_loss(model, out, srch.coords, targets)
    assert b.l_center >= 0 and b.l_offrot >= 0 and b.l_z >= 0
    assert b.l_main >= 0 and b.l_final >= 0
    assert all(v >= 0 for v in b.l_deep)


def test_total_loss_deep_branches_share_head_parameters():
    model, tpl, srch, targets = _tiny_model(stages=2)
    out = model.forward(tpl, srch)
    b = total_loss(model, out, srch.coords, targets, alpha=0.1)
    b.total.backward()
    # with shared localization, deep supervision reaches stage-0 cross
    # projections even though the main branch also uses them
    assert model.stages[0].ca_q.grad is not None
    assert model.loc.center_head.out_w.grad is not None
