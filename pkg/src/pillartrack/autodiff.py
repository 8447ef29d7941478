"""Reverse-mode automatic differentiation over numpy arrays.

A small tape-free graph engine sized for this tracker: each differentiable
operation returns a new :class:`Tensor` that remembers its parents and a
closure that routes the incoming gradient to them.  ``Tensor.backward()``
walks the graph in reverse topological order and accumulates gradients
into ``.grad`` ndarrays.

The operation set is exactly what the network needs (dense linear algebra,
a few activations, batch norm, grouped max pooling, 3x3 convolution) plus
an Adam optimizer and a central-finite-difference gradient checker.
Scope limits: no broadcasting beyond what the listed ops use, no
higher-order gradients.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "ShapeError",
    "MissingGradientError",
    "relu",
    "sigmoid",
    "elu_plus_one",
    "log",
    "exp",
    "clip",
    "absolute",
    "linear",
    "batchnorm",
    "maxpool_set",
    "conv2d_3x3",
    "gather_cell",
    "adam_step",
    "grad_check",
]


class ShapeError(ValueError):
    """Operand shapes incompatible with the operation."""


class MissingGradientError(RuntimeError):
    """An optimizer step was requested for a parameter without a gradient."""


def _as_float_array(data, dtype=None):
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype not in (np.float32, np.float64):
        return arr.astype(np.float64)
    return arr


class Tensor:
    """Dense multi-dimensional value participating in reverse-mode autodiff.

    ``data`` is a float32 or float64 ndarray (float64 by default).  When
    ``requires_grad`` is set, or the tensor was produced from one that has
    it set, backward() fills ``.grad`` with an ndarray of the same shape.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = _as_float_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._grad_fn = None

    # -- introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph plumbing ------------------------------------------------

    def _accumulate(self, delta) -> None:
        if self.grad is None:
            self.grad = np.array(delta, dtype=self.data.dtype)
            if self.grad.shape != self.data.shape:
                self.grad = np.broadcast_to(self.grad, self.data.shape).copy()
        else:
            self.grad += delta

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable ``.grad``.

        ``self`` must be scalar (size 1).  Gradients add onto whatever is
        already stored, so per-sample backward calls accumulate naturally
        across a batch.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar, got shape {self.data.shape}")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent._grad_fn is not None and id(parent) not in seen:
                    stack.append((parent, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._grad_fn is not None:
                node._grad_fn(node.grad)

    # -- operator sugar --------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_coerce(other, self), self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_coerce(other, self), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self):
        return tensor_sum(self) * (1.0 / self.data.size)


class Parameter(Tensor):
    """Named leaf tensor with Adam moment state.

    Names are unique within a model; the moment accumulators start at zero
    and are advanced by :func:`adam_step`.
    """

    __slots__ = ("name", "adam_m", "adam_v", "step_count")

    def __init__(self, name: str, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.step_count = 0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


# -- op construction helpers ------------------------------------------


def _make(out_data, parents, grad_fn):
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._grad_fn = None
    return out


def _coerce(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.data.dtype))


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- elementwise and reduction ops -------------------------------------


def add(a: Tensor, b) -> Tensor:
    b = _coerce(b, a)
    out_data = a.data + b.data

    def grad_fn(dy):
        if a.requires_grad:
            a._accumulate(_unbroadcast(dy, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(dy, b.data.shape))

    return _make(out_data, (a, b), grad_fn)


def sub(a: Tensor, b) -> Tensor:
    b = _coerce(b, a)
    out_data = a.data - b.data

    def grad_fn(dy):
        if a.requires_grad:
            a._accumulate(_unbroadcast(dy, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-dy, b.data.shape))

    return _make(out_data, (a, b), grad_fn)


def mul(a: Tensor, b) -> Tensor:
    b = _coerce(b, a)
    out_data = a.data * b.data

    def grad_fn(dy):
        if a.requires_grad:
            a._accumulate(_unbroadcast(dy * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(dy * a.data, b.data.shape))

    return _make(out_data, (a, b), grad_fn)


def div(a: Tensor, b) -> Tensor:
    b = _coerce(b, a)
    out_data = a.data / b.data

    def grad_fn(dy):
        if a.requires_grad:
            a._accumulate(_unbroadcast(dy / b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-dy * out_data / b.data, b.data.shape))

    return _make(out_data, (a, b), grad_fn)


def power(a: Tensor, exponent: float) -> Tensor:
    exponent = float(exponent)
    out_data = a.data ** exponent

    def grad_fn(dy):
        if a.requires_grad:
            a._accumulate(dy * exponent * a.data ** (exponent - 1.0))

    return _make(out_data, (a,), grad_fn)


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0.0)

    def grad_fn(dy):
        if a.requires_grad:
            a._accumulate(dy * (a.data > 0.0))

    return _make(out_data, (a,), grad_fn)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # split by sign to avoid overflow in exp
    out_data = np.where(x >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def grad_fn(dy):
        if a.requires_grad:
            a._accumulate(dy * out_data * (1.0 - out_data))

    return _make(out_data, (a,), grad_fn)


def elu_plus_one(a: Tensor) -> Tensor:
    """x + 1 for x >= 0, exp(x) for x < 0; strictly positive output."""
    x = a.data
    out_data = np.where(x >= 0.0, x + 1.0, np.exp(np.minimum(x, 0.0)))

    def grad_fn(dy):
        if a.requires_grad:
            a._accumulate(dy * np.where(x >= 0.0, 1.0, out_data))

    return _make(out_data, (a,), grad_fn)


def log(a: Tensor) -> Tensor:
    out_data = np.log(a.data)

    def grad_fn(dy):
        if a.requires_grad:
            a._accumulate(dy / a.data)

    return _make(out_data, (a,), grad_fn)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def grad_fn(dy):
        if a.requires_grad:
            a._accumulate(dy * out_data)

    return _make(out_data, (a,), grad_fn)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    out_data = np.clip(a.data, lo, hi)
    inside = (a.data > lo) & (a.data < hi)

    def grad_fn(dy):
        if a.requires_grad:
            a._accumulate(dy * inside)

    return _make(out_data, (a,), grad_fn)


def absolute(a: Tensor) -> Tensor:
    out_data = np.abs(a.data)
    sign = np.sign(a.data)

    def grad_fn(dy):
        if a.requires_grad:
            a._accumulate(dy * sign)

    return _make(out_data, (a,), grad_fn)


def tensor_sum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def grad_fn(dy):
        if a.requires_grad:
            g = dy
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.data.shape).copy())

    return _make(out_data, (a,), grad_fn)


# -- linear algebra ----------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes {a.data.shape} x {b.data.shape}")
    out_data = a.data @ b.data

    def grad_fn(dy):
        if a.requires_grad:
            a._accumulate(dy @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ dy)

    return _make(out_data, (a, b), grad_fn)


def transpose(a: Tensor) -> Tensor:
    out_data = a.data.T

    def grad_fn(dy):
        if a.requires_grad:
            a._accumulate(dy.T)

    return _make(out_data, (a,), grad_fn)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x @ w + b with gradient to all three operands."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"linear shapes {x.data.shape} x {w.data.shape}")
    if b.data.shape != (w.data.shape[1],):
        raise ShapeError(f"linear bias shape {b.data.shape}, want ({w.data.shape[1]},)")
    out_data = x.data @ w.data + b.data

    def grad_fn(dy):
        if x.requires_grad:
            x._accumulate(dy @ w.data.T)
        if w.requires_grad:
            w._accumulate(x.data.T @ dy)
        if b.requires_grad:
            b._accumulate(dy.sum(axis=0))

    return _make(out_data, (x, w, b), grad_fn)


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean, running_var,
              training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-column batch normalization over an (N, C) input.

    Train mode normalizes with biased batch statistics and folds them into
    the running buffers (plain ndarrays, mutated in place).  Eval mode uses
    the running buffers only, so inference is batch-size independent.
    """
    if x.data.ndim != 2:
        raise ShapeError(f"batchnorm needs (N, C), got {x.data.shape}")
    n, c = x.data.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError("batchnorm affine parameters must be (C,)")

    if training:
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu = running_mean
        var = running_var

    ivar = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * ivar
    out_data = gamma.data * xhat + beta.data

    def grad_fn(dy):
        if gamma.requires_grad:
            gamma._accumulate((dy * xhat).sum(axis=0))
        if beta.requires_grad:
            beta._accumulate(dy.sum(axis=0))
        if x.requires_grad:
            dxhat = dy * gamma.data
            if training:
                dx = ivar * (dxhat - dxhat.mean(axis=0)
                             - xhat * (dxhat * xhat).mean(axis=0))
            else:
                dx = dxhat * ivar
            x._accumulate(dx)

    return _make(out_data, (x, gamma, beta), grad_fn)


def maxpool_set(x: Tensor, group_of, num_groups: int) -> Tensor:
    """Column-wise max over row groups; backward routes to argmax rows only.

    ``group_of`` assigns every row of ``x`` to one of ``num_groups`` groups,
    all of which must be non-empty.  Ties go to the lowest row index.
    """
    group_of = np.asarray(group_of, dtype=np.int64)
    n, c = x.data.shape
    if group_of.shape != (n,):
        raise ShapeError(f"group assignment shape {group_of.shape}, want ({n},)")
    counts = np.bincount(group_of, minlength=num_groups)
    if counts.size > num_groups or (counts == 0).any():
        raise ValueError("every group must own at least one row")

    if n > 1 and (group_of[1:] >= group_of[:-1]).all():
        order = np.arange(n)
        xs = x.data
    else:
        order = np.argsort(group_of, kind="stable")
        xs = x.data[order]
    starts = np.zeros(num_groups, dtype=np.int64)
    np.cumsum(counts[:-1], out=starts[1:])
    out_data = np.maximum.reduceat(xs, starts, axis=0)

    # winner per (group, column): lowest original row attaining the max
    hit = xs == out_data[group_of[order]]
    candidates = np.where(hit, order[:, None], n)
    winners = np.minimum.reduceat(candidates, starts, axis=0)

    def grad_fn(dy):
        if x.requires_grad:
            dx = np.zeros_like(x.data)
            cols = np.tile(np.arange(c), num_groups)
            np.add.at(dx, (winners.ravel(), cols), dy.ravel())
            x._accumulate(dx)

    return _make(out_data, (x,), grad_fn)


def _im2col_3x3(x: np.ndarray) -> np.ndarray:
    """(C, H, W) -> (H*W, C*9) patch matrix with zero padding 1."""
    c, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
    return windows.transpose(1, 2, 0, 3, 4).reshape(h * wd, c * 9)


def conv2d_3x3(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """3x3 cross-correlation, stride 1, zero padding 1 (spatial size kept)."""
    if x.data.ndim != 3 or w.data.ndim != 4 or w.data.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d_3x3 shapes x={x.data.shape} w={w.data.shape}")
    c_in, h, wd = x.data.shape
    c_out = w.data.shape[0]
    if w.data.shape[1] != c_in or b.data.shape != (c_out,):
        raise ShapeError(f"conv2d_3x3 channel mismatch x={x.data.shape} w={w.data.shape}")

    cols = _im2col_3x3(x.data)
    wmat = w.data.reshape(c_out, c_in * 9).T
    out_data = (cols @ wmat + b.data).T.reshape(c_out, h, wd).copy()

    def grad_fn(dy):
        dy_mat = dy.transpose(1, 2, 0).reshape(h * wd, c_out)
        if w.requires_grad:
            w._accumulate((cols.T @ dy_mat).T.reshape(w.data.shape))
        if b.requires_grad:
            b._accumulate(dy_mat.sum(axis=0))
        if x.requires_grad:
            # the input gradient is a correlation of dy with the kernel
            # flipped spatially and transposed in channels
            dy_cols = _im2col_3x3(dy)
            w_back = w.data[:, :, ::-1, ::-1].transpose(0, 2, 3, 1).reshape(c_out * 9, c_in)
            x._accumulate((dy_cols @ w_back).T.reshape(c_in, h, wd))

    return _make(out_data, (x, w, b), grad_fn)


def conv2d_3x3_nhwc(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """conv2d_3x3 on channels-last (H, W, C) maps; the layout the BEV hot
    path uses so patch extraction stays memcpy-friendly.

    Weights keep the (C_out, C_in, 3, 3) layout shared with conv2d_3x3.
    """
    if x.data.ndim != 3 or w.data.ndim != 4 or w.data.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d_3x3_nhwc shapes x={x.data.shape} w={w.data.shape}")
    h, wd, c_in = x.data.shape
    c_out = w.data.shape[0]
    if w.data.shape[1] != c_in or b.data.shape != (c_out,):
        raise ShapeError(f"conv2d_3x3_nhwc channel mismatch x={x.data.shape} w={w.data.shape}")

    xp = np.pad(x.data, ((1, 1), (1, 1), (0, 0)))
    offsets = [(u, v) for u in range(3) for v in range(3)]
    x_offs = []
    w_offs = []
    y = np.tile(b.data, (h * wd, 1))
    for u, v in offsets:
        xo = np.ascontiguousarray(xp[u:u + h, v:v + wd, :]).reshape(h * wd, c_in)
        wo = np.ascontiguousarray(w.data[:, :, u, v].T)
        y += xo @ wo
        x_offs.append(xo)
        w_offs.append(wo)
    out_data = y.reshape(h, wd, c_out)

    def grad_fn(dy):
        dy_mat = dy.reshape(h * wd, c_out)
        if b.requires_grad:
            b._accumulate(dy_mat.sum(axis=0))
        if w.requires_grad:
            dw = np.empty_like(w.data)
            for k, (u, v) in enumerate(offsets):
                dw[:, :, u, v] = (x_offs[k].T @ dy_mat).T
            w._accumulate(dw)
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for k, (u, v) in enumerate(offsets):
                dxp[u:u + h, v:v + wd, :] += (dy_mat @ w_offs[k].T).reshape(h, wd, c_in)
            x._accumulate(dxp[1:-1, 1:-1, :])

    return _make(out_data, (x, w, b), grad_fn)


def conv2d_3x3_nhwc_multi(x: Tensor, weights, biases) -> Tensor:
    """Several 3x3 convs over one (H, W, C) input, outputs concatenated.

    One patch extraction serves every layer; the backward pass splits the
    weight/bias gradients back to the individual parameters.  Channel
    ranges follow the order of ``weights``.
    """
    h, wd, c_in = x.data.shape
    w_cat = np.concatenate([w.data for w in weights], axis=0)
    b_cat = np.concatenate([b.data for b in biases])
    c_out = w_cat.shape[0]
    if w_cat.shape[1] != c_in:
        raise ShapeError(f"conv2d_3x3_nhwc_multi channel mismatch {w_cat.shape} vs {x.data.shape}")

    xp = np.pad(x.data, ((1, 1), (1, 1), (0, 0)))
    offsets = [(u, v) for u in range(3) for v in range(3)]
    x_offs = []
    w_offs = []
    y = np.tile(b_cat, (h * wd, 1))
    for u, v in offsets:
        xo = np.ascontiguousarray(xp[u:u + h, v:v + wd, :]).reshape(h * wd, c_in)
        wo = np.ascontiguousarray(w_cat[:, :, u, v].T)
        y += xo @ wo
        x_offs.append(xo)
        w_offs.append(wo)
    out_data = y.reshape(h, wd, c_out)
    splits = np.cumsum([w.data.shape[0] for w in weights])[:-1]

    def grad_fn(dy):
        dy_mat = dy.reshape(h * wd, c_out)
        if any(b.requires_grad for b in biases):
            db = dy_mat.sum(axis=0)
            for b, chunk in zip(biases, np.split(db, splits)):
                if b.requires_grad:
                    b._accumulate(chunk)
        if any(w.requires_grad for w in weights):
            dw = np.empty_like(w_cat)
            for k, (u, v) in enumerate(offsets):
                dw[:, :, u, v] = (x_offs[k].T @ dy_mat).T
            for w, chunk in zip(weights, np.split(dw, splits, axis=0)):
                if w.requires_grad:
                    w._accumulate(chunk)
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for k, (u, v) in enumerate(offsets):
                dxp[u:u + h, v:v + wd, :] += (dy_mat @ w_offs[k].T).reshape(h, wd, c_in)
            x._accumulate(dxp[1:-1, 1:-1, :])

    return _make(out_data, (x, *weights, *biases), grad_fn)


def slice_cols(a: Tensor, lo: int, hi: int) -> Tensor:
    """Column range of a 2-D tensor; backward scatters into the range."""
    out_data = a.data[:, lo:hi]

    def grad_fn(dy):
        if a.requires_grad:
            da = np.zeros_like(a.data)
            da[:, lo:hi] = dy
            a._accumulate(da)

    return _make(out_data, (a,), grad_fn)


def reshape(a: Tensor, shape) -> Tensor:
    out_data = a.data.reshape(shape)

    def grad_fn(dy):
        if a.requires_grad:
            a._accumulate(dy.reshape(a.data.shape))

    return _make(out_data, (a,), grad_fn)


def gather_cell(x: Tensor, row: int, col: int) -> Tensor:
    """Pick the channel vector at one spatial cell of a (C, H, W) tensor."""
    if x.data.ndim != 3:
        raise ShapeError(f"gather_cell needs (C, H, W), got {x.data.shape}")
    out_data = x.data[:, row, col].copy()

    def grad_fn(dy):
        if x.requires_grad:
            dx = np.zeros_like(x.data)
            dx[:, row, col] = dy
            x._accumulate(dx)

    return _make(out_data, (x,), grad_fn)


# -- optimizer and gradient checker ------------------------------------


def adam_step(params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> None:
    """One bias-corrected Adam update; clears gradients afterwards."""
    for p in params:
        if p.grad is None:
            raise MissingGradientError(f"parameter '{p.name}' has no gradient")
        g = p.grad
        p.step_count += 1
        p.adam_m *= beta1
        p.adam_m += (1.0 - beta1) * g
        p.adam_v *= beta2
        p.adam_v += (1.0 - beta2) * g * g
        m_hat = p.adam_m / (1.0 - beta1 ** p.step_count)
        v_hat = p.adam_v / (1.0 - beta2 ** p.step_count)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.grad = None


def grad_check(f, params, probes_per_param=20, step=1e-5, rng=None) -> float:
    """Compare backward gradients of ``f()`` against central differences.

    ``f`` must rebuild its graph on every call and return a scalar Tensor.
    A subset of entries per parameter is probed; returns the worst
    relative error, normalized by max(1, |analytic|, |numeric|).
    Only meaningful in 64-bit mode.
    """
    params = list(params)
    for p in params:
        if p.data.dtype != np.float64:
            raise ValueError(f"grad_check requires float64 parameters, got {p.data.dtype} for '{p.name}'")
        p.grad = None
    loss = f()
    if not np.isfinite(loss.data):
        raise FloatingPointError("grad_check: non-finite loss")
    loss.backward()
    analytic = []
    for p in params:
        analytic.append(np.zeros_like(p.data) if p.grad is None else p.grad.copy())
        p.grad = None

    if rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    for p, an in zip(params, analytic):
        flat = p.data.reshape(-1)
        an_flat = an.reshape(-1)
        n_probe = min(probes_per_param, flat.size)
        idx = rng.choice(flat.size, size=n_probe, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(f().data)
            flat[i] = orig - step
            f_minus = float(f().data)
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise FloatingPointError("grad_check: non-finite loss during probing")
            fd = (f_plus - f_minus) / (2.0 * step)
            err = abs(fd - an_flat[i]) / max(1.0, abs(fd), abs(an_flat[i]))
            worst = max(worst, err)
    for p in params:
        p.grad = None
    return worst
