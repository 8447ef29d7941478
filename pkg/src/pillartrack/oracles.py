"""Brute-force reference implementations for cross-checking the fast paths.

Everything here is written the slow, obvious way (explicit loops, direct
formulas) and shares no code with the modules it checks.  Tests and the
``oracle`` CLI subcommand compare the production implementations against
these.
"""

from __future__ import annotations

import math

import numpy as np


def naive_matmul(a, b):
    """Triple-loop matrix product."""
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m), dtype=np.float64)
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def naive_conv2d_3x3(x, w, b):
    """Septuple-loop 3x3 cross-correlation with zero padding 1."""
    c_in, h, wd = x.shape
    c_out = w.shape[0]
    out = np.zeros((c_out, h, wd), dtype=np.float64)
    for co in range(c_out):
        for y in range(h):
            for xx in range(wd):
                acc = b[co]
                for ci in range(c_in):
                    for ky in range(3):
                        for kx in range(3):
                            yy = y + ky - 1
                            xs = xx + kx - 1
                            if 0 <= yy < h and 0 <= xs < wd:
                                acc += w[co, ci, ky, kx] * x[ci, yy, xs]
                out[co, y, xx] = acc
    return out


def two_pass_batchnorm(x, gamma, beta, eps=1e-5):
    """Independent two-pass mean/variance normalization (train-mode stats)."""
    n, c = x.shape
    out = np.zeros_like(x)
    for j in range(c):
        mu = sum(x[i, j] for i in range(n)) / n
        var = sum((x[i, j] - mu) ** 2 for i in range(n)) / n
        for i in range(n):
            out[i, j] = gamma[j] * (x[i, j] - mu) / math.sqrt(var + eps) + beta[j]
    return out


def group_maxpool(x, group_of, num_groups):
    """Per-group column max by scanning every row."""
    n, c = x.shape
    out = np.full((num_groups, c), -np.inf)
    for i in range(n):
        g = group_of[i]
        for j in range(c):
            if x[i, j] > out[g, j]:
                out[g, j] = x[i, j]
    return out


def _elu1(x):
    return np.where(x >= 0.0, x + 1.0, np.exp(np.minimum(x, 0.0)))


def naive_linear_attention(q, k, v, eps=1e-8):
    """Quadratic double-loop evaluation of kernelized attention.

    out_i = sum_j (phi(q_i) . phi(k_j)) v_j / (eps + sum_j phi(q_i) . phi(k_j))
    with phi = elu + 1.
    """
    fq = _elu1(np.asarray(q, dtype=np.float64))
    fk = _elu1(np.asarray(k, dtype=np.float64))
    v = np.asarray(v, dtype=np.float64)
    n_q = fq.shape[0]
    out = np.zeros((n_q, v.shape[1]), dtype=np.float64)
    for i in range(n_q):
        num = np.zeros(v.shape[1], dtype=np.float64)
        den = 0.0
        for j in range(fk.shape[0]):
            wgt = float(fq[i] @ fk[j])
            num = num + wgt * v[j]
            den = den + wgt
        out[i] = num / (den + eps)
    return out


def hash_group_points(points, cell, x_min, y_min, nx, ny):
    """Group in-range points by cell via a plain dict; returns cell -> row list."""
    groups: dict[tuple[int, int], list[int]] = {}
    for idx, (x, y, _z) in enumerate(points):
        i = int(math.floor((x - x_min) / cell))
        j = int(math.floor((y - y_min) / cell))
        i = min(i, nx - 1)
        j = min(j, ny - 1)
        groups.setdefault((i, j), []).append(idx)
    return groups


def _inside_box(points, center, size_lwh, yaw):
    """Half-space containment of points in a yaw-rotated box (own copy)."""
    length, width, height = size_lwh
    d = points - np.asarray(center)
    c, s = math.cos(yaw), math.sin(yaw)
    px = c * d[:, 0] + s * d[:, 1]
    py = -s * d[:, 0] + c * d[:, 1]
    return ((np.abs(px) <= length / 2.0)
            & (np.abs(py) <= width / 2.0)
            & (np.abs(d[:, 2]) <= height / 2.0))


def brute_force_containment(points, center, size_lwh, yaw, enlarge=0.0):
    """Per-point loop version of the membership test above."""
    length, width, height = size_lwh
    c, s = math.cos(yaw), math.sin(yaw)
    keep = np.zeros(len(points), dtype=bool)
    for idx, p in enumerate(np.asarray(points, dtype=np.float64)):
        dx, dy, dz = p[0] - center[0], p[1] - center[1], p[2] - center[2]
        px = c * dx + s * dy
        py = -s * dx + c * dy
        keep[idx] = (abs(px) <= length / 2.0 + enlarge
                     and abs(py) <= width / 2.0 + enlarge
                     and abs(dz) <= height / 2.0 + enlarge)
    return keep


def monte_carlo_iou3d(box_a, box_b, n_samples=1_000_000, rng=None):
    """IoU of two oriented boxes by sampling uniformly inside box A.

    ``box_a``/``box_b`` are (center_xyz, (l, w, h), yaw) triples.  The
    estimate is intersection = vol_A * P(sample in B | sample in A).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    center_a, size_a, yaw_a = box_a
    center_b, size_b, yaw_b = box_b
    la, wa, ha = size_a
    local = rng.uniform(-0.5, 0.5, size=(n_samples, 3)) * np.array([la, wa, ha])
    c, s = math.cos(yaw_a), math.sin(yaw_a)
    world = np.empty_like(local)
    world[:, 0] = c * local[:, 0] - s * local[:, 1] + center_a[0]
    world[:, 1] = s * local[:, 0] + c * local[:, 1] + center_a[1]
    world[:, 2] = local[:, 2] + center_a[2]
    frac = float(np.mean(_inside_box(world, center_b, size_b, yaw_b)))
    vol_a = la * wa * ha
    vol_b = size_b[0] * size_b[1] * size_b[2]
    inter = frac * vol_a
    return inter / (vol_a + vol_b - inter)


def threshold_sweep_success(ious, thresholds):
    """Mean-of-curve success score by explicit per-threshold counting."""
    fractions = []
    for tau in thresholds:
        hits = 0
        for iou in ious:
            if iou > tau or iou == 1.0:
                hits += 1
        fractions.append(hits / len(ious))
    return 100.0 * sum(fractions) / len(fractions)


def threshold_sweep_precision(dists, thresholds):
    """Mean-of-curve precision score by explicit per-threshold counting."""
    fractions = []
    for d in thresholds:
        hits = 0
        for dist in dists:
            if dist <= d:
                hits += 1
        fractions.append(hits / len(dists))
    return 100.0 * sum(fractions) / len(fractions)
