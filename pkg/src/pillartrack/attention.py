"""Kernelized (linear) attention and the per-stage attention operations.

Attention here uses the positive feature map phi(x) = elu(x) + 1, so the
key-value summary can be computed once and reused: the quadratic
softmax-style normalization collapses to an O(N * C^2) product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import Parameter, Tensor, elu_plus_one, linear, matmul, relu

DENOM_EPS = 1e-8


@dataclass
class StageParams:
    """Weights of one stage.

    The self-attention projections and the positional encoding are shared
    between the template and search branches; the cross projections carry
    template keys/values into search queries.  ``rev_*`` exist only when
    the reverse (search -> template) fusion is enabled.
    """

    pos_w1: Parameter
    pos_b1: Parameter
    pos_w2: Parameter
    pos_b2: Parameter
    sa_q: Parameter
    sa_k: Parameter
    sa_v: Parameter
    ca_q: Parameter
    ca_k: Parameter
    ca_v: Parameter
    rev_q: Optional[Parameter] = None
    rev_k: Optional[Parameter] = None
    rev_v: Optional[Parameter] = None

    @classmethod
    def create(cls, stage_idx: int, feature_dim: int, rng: np.random.Generator,
               bidirectional: bool = False, dtype=np.float64) -> "StageParams":
        c = feature_dim
        pre = f"stage{stage_idx}"
        s3 = 1.0 / math.sqrt(3.0)
        sc = 1.0 / math.sqrt(c)

        def proj(name):
            return Parameter(f"{pre}.{name}", rng.normal(0.0, sc, (c, c)), dtype=dtype)

        params = cls(
            pos_w1=Parameter(f"{pre}.pos_w1", rng.normal(0.0, s3, (3, c)), dtype=dtype),
            pos_b1=Parameter(f"{pre}.pos_b1", np.zeros(c), dtype=dtype),
            pos_w2=Parameter(f"{pre}.pos_w2", rng.normal(0.0, sc, (c, c)), dtype=dtype),
            pos_b2=Parameter(f"{pre}.pos_b2", np.zeros(c), dtype=dtype),
            sa_q=proj("sa_q"), sa_k=proj("sa_k"), sa_v=proj("sa_v"),
            ca_q=proj("ca_q"), ca_k=proj("ca_k"), ca_v=proj("ca_v"),
        )
        if bidirectional:
            params.rev_q = proj("rev_q")
            params.rev_k = proj("rev_k")
            params.rev_v = proj("rev_v")
        return params

    def parameters(self) -> list[Parameter]:
        out = [self.pos_w1, self.pos_b1, self.pos_w2, self.pos_b2,
               self.sa_q, self.sa_k, self.sa_v,
               self.ca_q, self.ca_k, self.ca_v]
        if self.rev_q is not None:
            out += [self.rev_q, self.rev_k, self.rev_v]
        return out


def positional_encoding(centers_xyz: np.ndarray, stage: StageParams,
                        dtype=np.float64) -> Tensor:
    """Map (M, 3) metric pillar positions through linear -> relu -> linear."""
    x = Tensor(np.asarray(centers_xyz), dtype=dtype)
    h = relu(linear(x, stage.pos_w1, stage.pos_b1))
    return linear(h, stage.pos_w2, stage.pos_b2)


def linear_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Kernelized attention in its associativity-reordered form.

    out_i = phi(q_i) (sum_j phi(k_j) v_j^T) / (eps + phi(q_i) . sum_j phi(k_j))
    """
    fq = elu_plus_one(q)
    fk = elu_plus_one(k)
    kv = matmul(fk.T, v)                                   # (C, C)
    numer = matmul(fq, kv)                                 # (Nq, C)
    denom = matmul(fq, fk.sum(axis=0, keepdims=True).T) + DENOM_EPS   # (Nq, 1)
    return numer / denom


def self_attend(feats: Tensor, pos: Tensor, stage: StageParams) -> Tensor:
    """Attend a branch over itself; queries/keys/values all see F + E."""
    x = feats + pos
    return linear_attention(matmul(x, stage.sa_q), matmul(x, stage.sa_k),
                            matmul(x, stage.sa_v))


def cross_attend(search_hat: Tensor, search_pos: Tensor, template_hat: Tensor,
                 stage: StageParams) -> Tensor:
    """Inject template features into the search branch.

    Queries see the search positional encoding; keys and values are plain
    projections of the template features.
    """
    q = matmul(search_hat + search_pos, stage.ca_q)
    return linear_attention(q, matmul(template_hat, stage.ca_k),
                            matmul(template_hat, stage.ca_v))


def cross_attend_reverse(template_hat: Tensor, template_pos: Tensor,
                         search_hat: Tensor, stage: StageParams) -> Tensor:
    """Optional opposite-direction fusion (search -> template)."""
    if stage.rev_q is None:
        raise ValueError("reverse fusion weights were not created for this stage")
    q = matmul(template_hat + template_pos, stage.rev_q)
    return linear_attention(q, matmul(search_hat, stage.rev_k),
                            matmul(search_hat, stage.rev_v))
