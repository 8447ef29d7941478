"""Training loop: shuffled frame pairs, batched gradient accumulation, Adam."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import adam_step
from .config import Config
from .fileio import save_checkpoint, write_loss_log
from .losses import total_loss
from .network import TrackerModel
from .pillars import EmptyRegionError
from .tracker import Frame, make_train_sample, sample_targets


class TrainingError(RuntimeError):
    """Non-finite loss; message records the offending optimizer step."""


@dataclass
class TrainResult:
    model: TrackerModel
    loss_rows: list[dict] = field(default_factory=list)
    steps: int = 0
    skipped_samples: int = 0

    def first_loss(self) -> float:
        return self.loss_rows[0]["l_final"]

    def last_loss(self) -> float:
        return self.loss_rows[-1]["l_final"]


def build_model(cfg: Config) -> TrackerModel:
    return TrackerModel(
        feature_dim=cfg.feature_dim, num_stages=cfg.stages, grid=cfg.grid(),
        dense_stages=cfg.dense_stages, dense_localization=cfg.dense_localization,
        multi_correlation=cfg.multi_correlation, bidirectional=cfg.bidirectional_fusion,
        seed=cfg.seed, dtype=cfg.np_dtype(),
    )


def _sample_loss(model: TrackerModel, sample, cfg: Config, rng):
    tpl_set = model.build_pillars(sample.template_points, cfg.n_template, rng,
                                  branch="template")
    srch_set = model.build_pillars(sample.search_points, cfg.n_search, rng)
    outputs = model.forward(tpl_set, srch_set)
    targets = sample_targets(sample, model.grid)
    return total_loss(model, outputs, srch_set.coords, targets,
                      lambda1=cfg.lambda1, lambda2=cfg.lambda2, alpha=cfg.alpha)


def train(cfg: Config, tracklets: list[list[Frame]], out_dir=None,
          model: TrackerModel | None = None) -> TrainResult:
    """Train over all (t-1, t) pairs of the given tracklets.

    Each optimizer step averages gradients over up to ``batch_size``
    samples; pairs whose template or search region is empty are skipped
    and counted.  The run is fully determined by (config, data).
    """
    if model is None:
        model = build_model(cfg)
    model.train()
    params = model.parameters()
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])

    pairs = [(tr, t) for tr, frames in enumerate(tracklets)
             for t in range(1, len(frames))]
    if not pairs:
        raise ValueError("no (t-1, t) training pairs available")

    result = TrainResult(model=model)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    deep_names = [f"l_deep_{i + 1}" for i in range(max(0, cfg.stages - 1))]
    stop = False
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        for lo in range(0, len(order), cfg.batch_size):
            batch_ids = order[lo:lo + cfg.batch_size]
            samples = []
            for pair_idx in batch_ids:
                tr, t = pairs[pair_idx]
                frames = tracklets[tr]
                sample = make_train_sample(
                    frames[0], frames[t - 1], frames[t], rng,
                    n_template=cfg.n_template, n_search=cfg.n_search,
                    enlarge=cfg.enlarge, shift_xy=cfg.shift_xy,
                    shift_z=cfg.shift_z, shift_yaw=cfg.shift_yaw)
                if sample is None:
                    result.skipped_samples += 1
                else:
                    samples.append(sample)
            if not samples:
                continue

            sums = {"l_center": 0.0, "l_offrot": 0.0, "l_z": 0.0, "l_final": 0.0}
            deep_sums = [0.0] * len(deep_names)
            scale = 1.0 / len(samples)
            for sample in samples:
                try:
                    breakdown = _sample_loss(model, sample, cfg, rng)
                except EmptyRegionError:
                    result.skipped_samples += 1
                    continue
                if not np.isfinite(breakdown.l_final):
                    raise TrainingError(f"non-finite loss at step {result.steps + 1}")
                (breakdown.total * scale).backward()
                sums["l_center"] += breakdown.l_center * scale
                sums["l_offrot"] += breakdown.l_offrot * scale
                sums["l_z"] += breakdown.l_z * scale
                sums["l_final"] += breakdown.l_final * scale
                for i, v in enumerate(breakdown.l_deep):
                    deep_sums[i] += v * scale

            for p in params:
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)
            adam_step(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
                      eps=cfg.adam_eps)
            result.steps += 1
            row = {"step": result.steps, **sums}
            for name, v in zip(deep_names, deep_sums):
                row[name] = v
            row["l_final"] = sums["l_final"]
            result.loss_rows.append(row)
            if cfg.max_steps and result.steps >= cfg.max_steps:
                stop = True
                break
        if out_dir is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(out_dir / f"checkpoint_ep{epoch + 1:04d}.bin", model)
        if stop:
            break

    if out_dir is not None:
        ordered_rows = []
        for row in result.loss_rows:
            ordered = {"step": row["step"], "l_center": row["l_center"],
                       "l_offrot": row["l_offrot"], "l_z": row["l_z"]}
            for name in deep_names:
                ordered[name] = row.get(name, 0.0)
            ordered["l_final"] = row["l_final"]
            ordered_rows.append(ordered)
        write_loss_log(out_dir / "loss_log.csv", ordered_rows)
        save_checkpoint(out_dir / "checkpoint.bin", model)
    return result
