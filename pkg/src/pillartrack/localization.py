"""Target localization: BEV scatter, densely connected convs, and heads."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import (Parameter, Tensor, conv2d_3x3, conv2d_3x3_nhwc,
                       conv2d_3x3_nhwc_multi, linear, relu, reshape, sigmoid,
                       slice_cols, _make)
from .geometry import ObjectState, decanonicalize_state, normalize_angle
from .pillars import GridSpec


def scatter_to_bev(features: Tensor, coords: np.ndarray, grid: GridSpec) -> Tensor:
    """Place pillar features at their cells of a dense (C, ny, nx) map.

    Unfilled cells are zero.  The backward pass gathers gradients back to
    the pillar rows only (the exact adjoint).
    """
    m, c = features.data.shape
    coords = np.asarray(coords, dtype=np.int64)
    if coords.shape != (m, 2):
        raise ValueError(f"coords shape {coords.shape} does not match {m} pillars")
    ii, jj = coords[:, 0], coords[:, 1]
    if ii.size and (ii.min() < 0 or ii.max() >= grid.nx or jj.min() < 0 or jj.max() >= grid.ny):
        raise ValueError("pillar coords outside the grid")
    out_data = np.zeros((c, grid.ny, grid.nx), dtype=features.data.dtype)
    out_data[:, jj, ii] = features.data.T

    def grad_fn(dy):
        if features.requires_grad:
            features._accumulate(dy[:, jj, ii].T)

    return _make(out_data, (features,), grad_fn)


def _flatten_spatial(x: Tensor) -> Tensor:
    """(C, H, W) -> (H*W, C) so a linear layer can act per cell."""
    c, h, w = x.data.shape
    out_data = x.data.reshape(c, h * w).T.copy()

    def grad_fn(dy):
        if x.requires_grad:
            x._accumulate(dy.T.reshape(c, h, w))

    return _make(out_data, (x,), grad_fn)


def _unflatten_spatial(x: Tensor, h: int, w: int) -> Tensor:
    """(H*W, K) -> (K, H, W)."""
    k = x.data.shape[1]
    out_data = x.data.T.reshape(k, h, w).copy()

    def grad_fn(dy):
        if x.requires_grad:
            x._accumulate(dy.reshape(k, h * w).T)

    return _make(out_data, (x,), grad_fn)


@dataclass
class ConvLayer:
    weight: Parameter
    bias: Parameter

    @classmethod
    def create(cls, name: str, c_in: int, c_out: int, rng: np.random.Generator,
               dtype=np.float64) -> "ConvLayer":
        scale = 1.0 / math.sqrt(c_in * 9.0)
        # nonzero bias keeps the relu kink away from the all-zero BEV cells
        return cls(Parameter(f"{name}.weight", rng.normal(0.0, scale, (c_out, c_in, 3, 3)), dtype=dtype),
                   Parameter(f"{name}.bias", rng.uniform(-scale, scale, c_out), dtype=dtype))

    def parameters(self):
        return [self.weight, self.bias]


@dataclass
class Head:
    """One prediction head: 3x3 conv + relu, then a per-cell linear map."""

    conv: ConvLayer
    out_w: Parameter
    out_b: Parameter

    @classmethod
    def create(cls, name: str, c: int, k_out: int, rng: np.random.Generator,
               bias_init: float = 0.0, dtype=np.float64) -> "Head":
        scale = 1.0 / math.sqrt(c)
        return cls(
            conv=ConvLayer.create(f"{name}.conv", c, c, rng, dtype=dtype),
            out_w=Parameter(f"{name}.out_w", rng.normal(0.0, scale, (c, k_out)), dtype=dtype),
            out_b=Parameter(f"{name}.out_b", np.full(k_out, bias_init), dtype=dtype),
        )

    def parameters(self):
        return self.conv.parameters() + [self.out_w, self.out_b]

    def __call__(self, bev: Tensor) -> Tensor:
        c, h, w = bev.data.shape
        stem = relu(conv2d_3x3(bev, self.conv.weight, self.conv.bias))
        per_cell = linear(_flatten_spatial(stem), self.out_w, self.out_b)
        return _unflatten_spatial(per_cell, h, w)


@dataclass
class LocalizationParams:
    """Shared localization weights: 3-conv dense block plus the three heads."""

    convs: tuple[ConvLayer, ConvLayer, ConvLayer]
    center_head: Head
    offrot_head: Head
    z_head: Head

    @classmethod
    def create(cls, feature_dim: int, rng: np.random.Generator, dtype=np.float64) -> "LocalizationParams":
        c = feature_dim
        convs = tuple(ConvLayer.create(f"loc.conv{i}", c, c, rng, dtype=dtype) for i in range(3))
        return cls(
            convs=convs,
            # prior bias keeps early heatmaps near p=0.1, which tames the focal loss
            center_head=Head.create("head.center", c, 1, rng, bias_init=-2.19, dtype=dtype),
            offrot_head=Head.create("head.offrot", c, 3, rng, dtype=dtype),
            z_head=Head.create("head.z", c, 1, rng, dtype=dtype),
        )

    def parameters(self):
        out = []
        for cv in self.convs:
            out += cv.parameters()
        return out + self.center_head.parameters() + self.offrot_head.parameters() + self.z_head.parameters()


@dataclass
class HeadOutputs:
    """Dense predictions: sigmoid heatmap, (dx, dy, theta) map, z map."""

    center_heatmap: Tensor   # (1, ny, nx), values in (0, 1)
    offset_rot: Tensor       # (3, ny, nx): dx, dy in cells; theta in radians
    z_map: Tensor            # (1, ny, nx), meters in the canonical frame


def dense_conv_block(bev: Tensor, convs, use_dense: bool = True) -> Tensor:
    """Three 3x3 convs (each followed by relu) with dense input sums.

    With dense connections, conv k sees bev plus every earlier conv output,
    and the block output adds all three onto the input, filling the zero
    holes left by empty cells.  Without them it is a plain chain.
    """
    if use_dense:
        acc = bev
        for cv in convs:
            out = relu(conv2d_3x3(acc, cv.weight, cv.bias))
            acc = acc + out
        return acc
    h = bev
    for cv in convs:
        h = relu(conv2d_3x3(h, cv.weight, cv.bias))
    return h


def run_heads(bev: Tensor, params: LocalizationParams) -> HeadOutputs:
    return HeadOutputs(
        center_heatmap=sigmoid(params.center_head(bev)),
        offset_rot=params.offrot_head(bev),
        z_map=params.z_head(bev),
    )


# -- channels-last fast path --------------------------------------------
#
# Identical math to scatter_to_bev + dense_conv_block + run_heads, but the
# maps stay (ny, nx, C) so convolution patches and per-cell linears touch
# contiguous memory.  Outputs come back in the public (K, ny, nx) shapes.


def _scatter_nhwc(features: Tensor, coords: np.ndarray, grid: GridSpec) -> Tensor:
    m, c = features.data.shape
    ii, jj = coords[:, 0], coords[:, 1]
    out_data = np.zeros((grid.ny, grid.nx, c), dtype=features.data.dtype)
    out_data[jj, ii, :] = features.data

    def grad_fn(dy):
        if features.requires_grad:
            features._accumulate(dy[jj, ii, :])

    return _make(out_data, (features,), grad_fn)


def localize_features(features: Tensor, coords: np.ndarray, grid: GridSpec,
                      params: LocalizationParams, use_dense: bool = True) -> HeadOutputs:
    """Scatter, dense conv block, and heads on the channels-last path.

    The three head stems convolve the same map, so they run as one fused
    conv with concatenated output channels.
    """
    acc = _scatter_nhwc(features, coords, grid)
    if use_dense:
        for cv in params.convs:
            acc = acc + relu(conv2d_3x3_nhwc(acc, cv.weight, cv.bias))
    else:
        for cv in params.convs:
            acc = relu(conv2d_3x3_nhwc(acc, cv.weight, cv.bias))

    ny, nx = grid.ny, grid.nx
    heads = (params.center_head, params.offrot_head, params.z_head)
    stems = relu(conv2d_3x3_nhwc_multi(
        acc, [h.conv.weight for h in heads], [h.conv.bias for h in heads]))
    flat = reshape(stems, (ny * nx, stems.data.shape[2]))
    c = params.center_head.out_w.data.shape[0]
    maps = []
    for idx, head in enumerate(heads):
        per_cell = linear(slice_cols(flat, idx * c, (idx + 1) * c),
                          head.out_w, head.out_b)
        maps.append(_unflatten_spatial(per_cell, ny, nx))
    return HeadOutputs(center_heatmap=sigmoid(maps[0]), offset_rot=maps[1],
                       z_map=maps[2])


@dataclass
class BoxTargets:
    """Supervision targets in the canonical frame."""

    heatmap: np.ndarray          # (1, ny, nx), exactly one cell at 1.0
    offset: tuple[float, float]  # fractional cell offsets, each in [0, 1)
    rotation: float              # radians
    z: float                     # meters
    cell: tuple[int, int]        # (i, j) integer center cell
    degenerate: bool = False     # center fell outside the grid and was clamped


def gaussian_sigma_cells(box: ObjectState, cell: float) -> float:
    """Heatmap radius in cell units, from the box footprint."""
    return float(max(1, round(min(box.w, box.l) / (3.0 * cell))))


def encode_targets(gt: ObjectState, grid: GridSpec) -> BoxTargets:
    """Build the Gaussian heatmap and regression targets for one box."""
    nx, ny = grid.nx, grid.ny
    fx = (gt.x - grid.x_range[0]) / grid.cell
    fy = (gt.y - grid.y_range[0]) / grid.cell
    degenerate = not (0.0 <= fx < nx and 0.0 <= fy < ny)
    i = int(np.clip(math.floor(fx), 0, nx - 1))
    j = int(np.clip(math.floor(fy), 0, ny - 1))
    dx = float(np.clip(fx - i, 0.0, 1.0 - 1e-9))
    dy = float(np.clip(fy - j, 0.0, 1.0 - 1e-9))

    sigma = gaussian_sigma_cells(gt, grid.cell)
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
    d2 = (ii - i) ** 2 + (jj - j) ** 2
    heatmap = np.exp(-d2 / (2.0 * sigma * sigma))[None, :, :]
    heatmap[0, j, i] = 1.0

    return BoxTargets(heatmap=heatmap, offset=(dx, dy), rotation=gt.theta,
                      z=gt.z, cell=(i, j), degenerate=degenerate)


def decode_box(heads: HeadOutputs, grid: GridSpec, reference: ObjectState,
               sizes: tuple[float, float, float]) -> ObjectState:
    """Read the peak cell and regressions, then undo the canonical frame.

    The argmax tie-break is the lowest flattened index.  Sizes are carried
    from the initial ground-truth box, never estimated.
    """
    heat = heads.center_heatmap.data[0]
    flat = int(np.argmax(heat))
    j, i = divmod(flat, grid.nx)
    dx = float(heads.offset_rot.data[0, j, i])
    dy = float(heads.offset_rot.data[1, j, i])
    theta = float(heads.offset_rot.data[2, j, i])
    z = float(heads.z_map.data[0, j, i])
    w, l, h = sizes
    canonical = ObjectState(
        x=grid.x_range[0] + (i + dx) * grid.cell,
        y=grid.y_range[0] + (j + dy) * grid.cell,
        z=z, w=w, l=l, h=h, theta=normalize_angle(theta),
    )
    return decanonicalize_state(canonical, reference)


def targets_as_heads(targets: BoxTargets, grid: GridSpec, dtype=np.float64) -> HeadOutputs:
    """Package targets as dense predictions (for round-trip checks)."""
    offrot = np.zeros((3, grid.ny, grid.nx), dtype=dtype)
    offrot[0] = targets.offset[0]
    offrot[1] = targets.offset[1]
    offrot[2] = targets.rotation
    zmap = np.full((1, grid.ny, grid.nx), targets.z, dtype=dtype)
    return HeadOutputs(center_heatmap=Tensor(targets.heatmap, dtype=dtype),
                       offset_rot=Tensor(offrot), z_map=Tensor(zmap))
