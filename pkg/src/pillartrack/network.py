"""The full tracker network: pillar encoder, attention stages, localization.

The template branch is processed by self-attention only and chains from
stage to stage, so its features stay a function of template inputs alone
(unless reverse fusion is switched on for ablation).  The search branch
receives the element-wise sum of the initial pillar features and every
preceding stage output, and the same running sum (extended by the last
stage) feeds target localization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .attention import (StageParams, cross_attend, cross_attend_reverse,
                        positional_encoding, self_attend)
from .autodiff import Parameter, Tensor
from .localization import HeadOutputs, LocalizationParams, localize_features
from .pillars import GridSpec, PillarEncoder, PillarSet, build_pillar_set


@dataclass
class NetworkOutputs:
    """Per-stage branch features plus the localization input.

    ``search_inputs_per_stage`` records what each stage actually consumed,
    so the dense-connection bookkeeping can be checked exactly.
    """

    template_per_stage: list[Tensor]
    search_per_stage: list[Tensor]
    search_loc_input: Tensor
    search_inputs_per_stage: list[Tensor] = field(default_factory=list)


class TrackerModel:
    """Owns every parameter and the forward passes that use them."""

    def __init__(self, feature_dim: int = 128, num_stages: int = 2,
                 grid: Optional[GridSpec] = None, dense_stages: bool = True,
                 dense_localization: bool = True, multi_correlation: bool = True,
                 bidirectional: bool = False, seed: int = 0, dtype=np.float64):
        if num_stages < 1:
            raise ValueError("need at least one stage")
        self.feature_dim = feature_dim
        self.grid = grid if grid is not None else GridSpec()
        self.dense_stages = dense_stages
        self.dense_localization = dense_localization
        self.multi_correlation = multi_correlation
        self.bidirectional = bidirectional
        self.dtype = np.dtype(dtype)
        self.training = True

        rng = np.random.default_rng(seed)
        self.pnet = PillarEncoder.create(feature_dim, rng, dtype=self.dtype)
        self.stages = [StageParams.create(i, feature_dim, rng, bidirectional=bidirectional,
                                          dtype=self.dtype)
                       for i in range(num_stages)]
        self.loc = LocalizationParams.create(feature_dim, rng, dtype=self.dtype)

        names = [p.name for p in self.parameters()]
        if len(names) != len(set(names)):
            raise ValueError("duplicate parameter names")

    # -- bookkeeping -----------------------------------------------------

    def parameters(self) -> list[Parameter]:
        out = list(self.pnet.parameters())
        for st in self.stages:
            out += st.parameters()
        out += self.loc.parameters()
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        return dict(self.pnet.buffers())

    def train(self) -> "TrackerModel":
        self.training = True
        return self

    def eval(self) -> "TrackerModel":
        self.training = False
        return self

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    # -- forward passes ----------------------------------------------------

    def build_pillars(self, cloud: np.ndarray, target_count: int,
                      rng: np.random.Generator, branch: str = "search") -> PillarSet:
        return build_pillar_set(cloud, self.grid, self.pnet, target_count, rng,
                                training=self.training, branch=branch,
                                dtype=self.dtype)

    def _pillar_positions(self, pillars: PillarSet) -> np.ndarray:
        m = pillars.count
        pos = np.empty((m, 3), dtype=self.dtype)
        pos[:, 0:2] = pillars.centers_xy
        pos[:, 2] = self.grid.z_mid
        return pos

    def forward(self, template: PillarSet, search: PillarSet) -> NetworkOutputs:
        t_pos3 = self._pillar_positions(template)
        s_pos3 = self._pillar_positions(search)

        t_feat = template.features
        acc = search.features          # running left-fold sum of search outputs
        prev_out = search.features
        t_stages: list[Tensor] = []
        s_stages: list[Tensor] = []
        s_inputs: list[Tensor] = []
        last_idx = len(self.stages) - 1

        for idx, stage in enumerate(self.stages):
            s_in = acc if self.dense_stages else prev_out
            s_inputs.append(s_in)
            e_t = positional_encoding(t_pos3, stage, dtype=self.dtype)
            e_s = positional_encoding(s_pos3, stage, dtype=self.dtype)

            t_hat = self_attend(t_feat, e_t, stage)
            s_hat = self_attend(s_in, e_s, stage)

            if self.multi_correlation or idx == last_idx:
                s_tilde = cross_attend(s_hat, e_s, t_hat, stage)
            else:
                s_tilde = s_hat
            if self.bidirectional:
                t_feat = cross_attend_reverse(t_hat, e_t, s_hat, stage)
            else:
                t_feat = t_hat

            t_stages.append(t_feat)
            s_stages.append(s_tilde)
            prev_out = s_tilde
            acc = acc + s_tilde

        # the summed skip into localization belongs to the stage connections;
        # dense_localization only switches the conv block
        loc_input = acc if self.dense_stages else prev_out
        return NetworkOutputs(template_per_stage=t_stages, search_per_stage=s_stages,
                              search_loc_input=loc_input,
                              search_inputs_per_stage=s_inputs)

    def localize(self, features: Tensor, coords: np.ndarray) -> HeadOutputs:
        """Scatter search features to BEV and run the shared localization."""
        return localize_features(features, coords, self.grid, self.loc,
                                 use_dense=self.dense_localization)
