"""Built-in verification suites: finite-difference gradient checks and
brute-force oracle comparisons.

Both the ``gradcheck``/``oracle`` CLI subcommands and the acceptance tests
run these.  Every check returns (name, measured error, tolerance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import oracles
from .autodiff import (Parameter, Tensor, adam_step, batchnorm, conv2d_3x3,
                       elu_plus_one, grad_check, linear, maxpool_set, relu,
                       sigmoid)
from .attention import linear_attention
from .config import Config
from .geometry import ObjectState
from .localization import scatter_to_bev
from .losses import focal_loss, l1_loss, total_loss
from .metrics import iou3d
from .pillars import GridSpec, decorate, voxelize_dynamic
from .tracker import make_train_sample, sample_targets
from .train import build_model
from .synth import TrackletParams, gen_synthetic_tracklet


@dataclass
class CheckResult:
    name: str
    error: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.error < self.tolerance

    def line(self) -> str:
        status = "ok  " if self.ok else "FAIL"
        return f"[{status}] {self.name:<28} error {self.error:.3e}  (tol {self.tolerance:.0e})"


def _weighted_sum(t: Tensor, rng) -> Tensor:
    return (t * rng.normal(size=t.data.shape)).sum()


# -- gradient suite -----------------------------------------------------


def _check_linear(rng, probes):
    x = Parameter("x", rng.normal(size=(6, 5)))
    w = Parameter("w", rng.normal(size=(5, 4)))
    b = Parameter("b", rng.normal(size=4))
    r = rng.normal(size=(6, 4))
    return grad_check(lambda: (linear(x, w, b) * r).sum(), [x, w, b],
                      probes_per_param=probes, rng=rng)


def _check_elementwise(op, shift):
    def run(rng, probes):
        data = rng.normal(size=(5, 6))
        data += np.sign(data) * shift      # keep probes away from kinks
        x = Parameter("x", data)
        r = rng.normal(size=(5, 6))
        return grad_check(lambda: (op(x) * r).sum(), [x],
                          probes_per_param=probes, rng=rng)
    return run


def _check_batchnorm(rng, probes):
    x = Parameter("x", rng.normal(size=(8, 4)))
    gamma = Parameter("gamma", rng.uniform(0.5, 1.5, 4))
    beta = Parameter("beta", rng.normal(size=4))
    r = rng.normal(size=(8, 4))

    def f():
        rm, rv = np.zeros(4), np.ones(4)
        return (batchnorm(x, gamma, beta, rm, rv, training=True) * r).sum()

    return grad_check(f, [x, gamma, beta], probes_per_param=probes, rng=rng)


def _check_maxpool(rng, probes):
    x = Parameter("x", rng.normal(size=(30, 6)))
    groups = rng.integers(0, 7, size=30)
    groups[:7] = np.arange(7)             # every group non-empty
    r = rng.normal(size=(7, 6))
    return grad_check(lambda: (maxpool_set(x, groups, 7) * r).sum(), [x],
                      probes_per_param=probes, rng=rng)


def _check_conv(rng, probes):
    x = Parameter("x", rng.normal(size=(2, 6, 6)))
    w = Parameter("w", rng.normal(size=(3, 2, 3, 3)))
    b = Parameter("b", rng.normal(size=3))
    r = rng.normal(size=(3, 6, 6))
    return grad_check(lambda: (conv2d_3x3(x, w, b) * r).sum(), [x, w, b],
                      probes_per_param=probes, rng=rng)


def _check_scatter(rng, probes):
    grid = GridSpec(cell=1.0, x_range=(0.0, 6.0), y_range=(0.0, 5.0))
    feats = Parameter("feats", rng.normal(size=(8, 3)))
    cells = rng.permutation(grid.nx * grid.ny)[:8]
    coords = np.stack([cells % grid.nx, cells // grid.nx], axis=1)
    r = rng.normal(size=(3, grid.ny, grid.nx))
    return grad_check(lambda: (scatter_to_bev(feats, coords, grid) * r).sum(),
                      [feats], probes_per_param=probes, rng=rng)


def _check_attention(rng, probes):
    q = Parameter("q", rng.normal(size=(7, 5)))
    k = Parameter("k", rng.normal(size=(9, 5)))
    v = Parameter("v", rng.normal(size=(9, 5)))
    r = rng.normal(size=(7, 5))
    return grad_check(lambda: (linear_attention(q, k, v) * r).sum(), [q, k, v],
                      probes_per_param=probes, rng=rng)


def _check_focal(rng, probes):
    logits = Parameter("logits", rng.normal(size=(1, 8, 8)))
    target = np.exp(-rng.uniform(0.0, 8.0, size=(1, 8, 8)))
    target[0, 3, 4] = 1.0
    return grad_check(lambda: focal_loss(sigmoid(logits), target), [logits],
                      probes_per_param=probes, rng=rng)


def _check_l1(rng, probes):
    pred = Parameter("pred", rng.normal(size=3))
    target = pred.data + np.sign(rng.normal(size=3)) * rng.uniform(0.1, 1.0, 3)
    return grad_check(lambda: l1_loss(pred, target), [pred],
                      probes_per_param=probes, rng=rng)


def _full_model_loss_error(rng, probes_per_param=2):
    cfg = Config(feature_dim=16, n_template=64, n_search=128, seed=3)
    model = build_model(cfg)
    model.train()
    frames = gen_synthetic_tracklet(
        TrackletParams(n_frames=3, surface_points=120, clutter_points=30), rng)
    sample = make_train_sample(frames[0], frames[1], frames[2],
                               np.random.default_rng(5),
                               n_template=cfg.n_template, n_search=cfg.n_search)
    targets = sample_targets(sample, model.grid)

    def f():
        build_rng = np.random.default_rng(11)
        tpl = model.build_pillars(sample.template_points, cfg.n_template,
                                  build_rng, branch="template")
        srch = model.build_pillars(sample.search_points, cfg.n_search, build_rng)
        outputs = model.forward(tpl, srch)
        return total_loss(model, outputs, srch.coords, targets,
                          cfg.lambda1, cfg.lambda2, cfg.alpha).total

    return grad_check(f, model.parameters(), probes_per_param=probes_per_param, rng=rng)


def gradient_suite(seed: int = 0, probes: int = 20) -> list[CheckResult]:
    """Finite-difference checks of every differentiable operation."""
    entries = [
        ("linear", _check_linear, 1e-7),
        ("relu", _check_elementwise(relu, 0.05), 1e-6),
        ("elu_plus_one", _check_elementwise(elu_plus_one, 0.0), 1e-6),
        ("sigmoid", _check_elementwise(sigmoid, 0.0), 1e-6),
        ("batchnorm", _check_batchnorm, 1e-5),
        ("maxpool_set", _check_maxpool, 1e-6),
        ("conv2d_3x3", _check_conv, 1e-6),
        ("scatter_to_bev", _check_scatter, 1e-6),
        ("linear_attention", _check_attention, 1e-5),
        ("focal_loss", _check_focal, 1e-5),
        ("l1_loss", _check_l1, 1e-6),
    ]
    results = []
    for idx, (name, fn, tol) in enumerate(entries):
        rng = np.random.default_rng(seed + 1000 * idx)
        results.append(CheckResult(name, fn(rng, probes), tol))
    results.append(CheckResult(
        "full_model_loss",
        _full_model_loss_error(np.random.default_rng(seed + 99_000)),
        1e-4))
    return results


# -- oracle suite -------------------------------------------------------


def attention_oracle_error(n_instances: int = 100, seed: int = 0) -> float:
    """Worst |reordered - naive quadratic| over random instances."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        n_q = int(rng.integers(1, 65))
        n_k = int(rng.integers(1, 65))
        c = int(rng.integers(2, 33))
        q = rng.normal(size=(n_q, c))
        k = rng.normal(size=(n_k, c))
        v = rng.normal(size=(n_k, c))
        fast = linear_attention(Tensor(q), Tensor(k), Tensor(v)).data
        ref = oracles.naive_linear_attention(q, k, v)
        worst = max(worst, float(np.max(np.abs(fast - ref))))
    return worst


def pillar_oracle_error(n_clouds: int = 50, seed: int = 0) -> float:
    """Grouping must match the hash oracle exactly; returns the worst
    absolute deviation of the mean-offset columns (index mismatch = inf)."""
    rng = np.random.default_rng(seed)
    grid = GridSpec()
    worst = 0.0
    for _ in range(n_clouds):
        n = int(rng.integers(20, 400))
        pts = np.column_stack([rng.uniform(-5.5, 5.5, n), rng.uniform(-5.5, 5.5, n),
                               rng.uniform(-2.0, 2.0, n)])
        try:
            kept, pillar_of, coords = voxelize_dynamic(pts, grid)
        except Exception:
            continue
        groups = oracles.hash_group_points(kept, grid.cell, grid.x_range[0],
                                           grid.y_range[0], grid.nx, grid.ny)
        ours = {}
        for row, pid in enumerate(pillar_of):
            ours.setdefault((int(coords[pid, 0]), int(coords[pid, 1])), set()).add(row)
        theirs = {cell: set(rows) for cell, rows in groups.items()}
        if ours != theirs:
            return float("inf")
        decorated = decorate(kept, pillar_of, coords, grid)
        for cell, rows in groups.items():
            rows = sorted(rows)
            mean = kept[rows].mean(axis=0)
            ref = kept[rows] - mean
            worst = max(worst, float(np.max(np.abs(decorated[rows, 3:6] - ref))))
    return worst


def iou_oracle_error(n_pairs: int = 200, mc_samples: int = 1_000_000,
                     seed: int = 0) -> float:
    """Worst |polygon-clipping IoU - Monte-Carlo IoU| over random pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        size_a = rng.uniform(0.8, 4.5, 3)
        size_b = rng.uniform(0.8, 4.5, 3)
        center_a = rng.uniform(-1.0, 1.0, 3)
        center_b = center_a + rng.uniform(-2.0, 2.0, 3)
        yaw_a = rng.uniform(-math.pi, math.pi)
        yaw_b = rng.uniform(-math.pi, math.pi)
        a = ObjectState(*center_a, w=size_a[0], l=size_a[1], h=size_a[2], theta=yaw_a)
        b = ObjectState(*center_b, w=size_b[0], l=size_b[1], h=size_b[2], theta=yaw_b)
        ours = iou3d(a, b)
        ref = oracles.monte_carlo_iou3d(
            ((a.x, a.y, a.z), (a.l, a.w, a.h), a.theta),
            ((b.x, b.y, b.z), (b.l, b.w, b.h), b.theta),
            n_samples=mc_samples, rng=rng)
        worst = max(worst, abs(ours - ref))
    return worst


def matmul_oracle_error(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(5, 3))
    w = rng.normal(size=(3, 2))
    b = rng.normal(size=2)
    ours = linear(Tensor(x), Tensor(w), Tensor(b)).data
    ref = oracles.naive_matmul(x, w) + b
    return float(np.max(np.abs(ours - ref)))


def conv_oracle_error(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, 6, 6))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    ours = conv2d_3x3(Tensor(x), Tensor(w), Tensor(b)).data
    ref = oracles.naive_conv2d_3x3(x, w, b)
    return float(np.max(np.abs(ours - ref)))


def batchnorm_oracle_error(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(8, 4))
    gamma = rng.uniform(0.5, 1.5, 4)
    beta = rng.normal(size=4)
    ours = batchnorm(Tensor(x), Tensor(gamma), Tensor(beta), np.zeros(4),
                     np.ones(4), training=True).data
    ref = oracles.two_pass_batchnorm(x, gamma, beta)
    return float(np.max(np.abs(ours - ref)))


def maxpool_oracle_error(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(50, 8))
    groups = rng.integers(0, 7, size=50)
    groups[:7] = np.arange(7)
    ours = maxpool_set(Tensor(x), groups, 7).data
    ref = oracles.group_maxpool(x, groups, 7)
    return float(np.max(np.abs(ours - ref)))


def adam_oracle_error() -> float:
    """One hand-computed bias-corrected step on a scalar."""
    p = Parameter("p", np.array(1.0))
    p.grad = np.array(1.0)
    adam_step([p], lr=0.1)
    m_hat = 0.1 * 1.0 / (1.0 - 0.9)
    v_hat = 0.001 * 1.0 / (1.0 - 0.999)
    expected = 1.0 - 0.1 * m_hat / (math.sqrt(v_hat) + 1e-8)
    return abs(float(p.data) - expected)


def oracle_suite(seed: int = 0, attention_instances: int = 100,
                 pillar_clouds: int = 50, iou_pairs: int = 20,
                 iou_samples: int = 200_000) -> list[CheckResult]:
    """All brute-force oracle comparisons at (possibly reduced) trial counts."""
    return [
        CheckResult("linear_vs_naive_matmul", matmul_oracle_error(seed), 1e-12),
        CheckResult("conv_vs_naive_conv", conv_oracle_error(seed), 1e-12),
        CheckResult("batchnorm_vs_two_pass", batchnorm_oracle_error(seed), 1e-10),
        CheckResult("maxpool_vs_brute_force", maxpool_oracle_error(seed), 1e-15),
        CheckResult("attention_vs_quadratic",
                    attention_oracle_error(attention_instances, seed), 1e-10),
        CheckResult("pillars_vs_hash_grouping",
                    pillar_oracle_error(pillar_clouds, seed), 1e-12),
        CheckResult("iou_vs_monte_carlo",
                    iou_oracle_error(iou_pairs, iou_samples, seed), 5e-3),
        CheckResult("adam_vs_hand_recurrence", adam_oracle_error(), 1e-12),
    ]
