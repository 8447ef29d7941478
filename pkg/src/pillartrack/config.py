"""Flat key = value configuration with typed validation."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .pillars import GridSpec


class ConfigError(ValueError):
    """Bad key, bad type, or out-of-range value in a configuration."""


@dataclass
class Config:
    # sampling
    n_template: int = 512
    n_search: int = 1024
    # grid
    cell: float = 0.3
    x_min: float = -4.8
    x_max: float = 4.8
    y_min: float = -4.8
    y_max: float = 4.8
    z_min: float = -1.5
    z_max: float = 1.5
    # network
    feature_dim: int = 128
    stages: int = 2
    dense_stages: bool = True
    dense_localization: bool = True
    multi_correlation: bool = True
    bidirectional_fusion: bool = False
    # loss
    lambda1: float = 1.0
    lambda2: float = 2.0
    alpha: float = 0.1
    # sample construction
    shift_xy: float = 0.3
    shift_z: float = 0.1
    shift_yaw: float = 0.1
    enlarge: float = 2.0
    # optimization
    batch_size: int = 32
    epochs: int = 40
    max_steps: int = 0           # 0 = bounded by epochs only
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    checkpoint_every: int = 10   # epochs; final checkpoint always written
    # metrics
    iou_thresholds: int = 101
    dist_thresholds: int = 21
    dist_max: float = 2.0
    precision_use_3d: bool = True   # 3D center distance (vs BEV-only)
    # misc
    seed: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        positive_ints = ["n_template", "n_search", "feature_dim", "stages",
                         "batch_size", "epochs", "iou_thresholds", "dist_thresholds"]
        for name in positive_ints:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.cell <= 0:
            raise ConfigError("cell must be positive")
        for lo, hi in (("x_min", "x_max"), ("y_min", "y_max"), ("z_min", "z_max")):
            if not getattr(self, hi) > getattr(self, lo):
                raise ConfigError(f"{hi} must exceed {lo}")
        for name in ["lambda1", "lambda2", "alpha", "shift_xy", "shift_z",
                     "shift_yaw", "enlarge", "lr", "adam_eps", "dist_max"]:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("beta1/beta2 must be in [0, 1)")
        if self.max_steps < 0 or self.checkpoint_every < 0:
            raise ConfigError("max_steps and checkpoint_every must be >= 0")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")

    # -- derived --------------------------------------------------------

    def grid(self) -> GridSpec:
        return GridSpec(cell=self.cell, x_range=(self.x_min, self.x_max),
                        y_range=(self.y_min, self.y_max),
                        z_range=(self.z_min, self.z_max))

    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32


def _parse_value(raw: str, py_type):
    raw = raw.strip()
    if py_type is bool:
        lowered = raw.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean from {raw!r}")
    if py_type is int:
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"cannot parse integer from {raw!r}") from exc
    if py_type is float:
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"cannot parse float from {raw!r}") from exc
    return raw


def load_config(path) -> Config:
    """Read ``key = value`` lines; '#' starts a comment; unknown keys fail."""
    known = {f.name: f.type for f in fields(Config)}
    # dataclass field types arrive as strings under future annotations
    type_map = {"int": int, "float": float, "bool": bool, "str": str}
    values = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        py_type = known[key] if isinstance(known[key], type) else type_map[known[key]]
        values[key] = _parse_value(raw, py_type)
    return Config(**values)


def save_config(cfg: Config, path) -> None:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(Config)]
    Path(path).write_text("\n".join(lines) + "\n")
