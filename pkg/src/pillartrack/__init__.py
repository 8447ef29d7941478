"""Pillar-based Siamese transformer for 3D single object tracking.

A self-contained numpy implementation: a small reverse-mode autodiff core,
sparse pillar encoding, staged linear attention with dense connections, a
BEV localization head, deep-supervision training, a frame-by-frame
tracking loop, and one-pass-evaluation metrics.
"""

from .autodiff import Parameter, Tensor, adam_step, grad_check
from .config import Config, load_config, save_config
from .geometry import ObjectState
from .localization import decode_box, encode_targets
from .metrics import TrackRun, aggregate, center_distance, iou3d, ope_precision, ope_success
from .network import TrackerModel
from .pillars import EmptyRegionError, GridSpec, PillarSet, build_pillar_set
from .synth import TrackletParams, gen_synthetic_tracklet
from .tracker import Frame, TrainSample, make_train_sample, track_sequence
from .train import TrainResult, build_model, train

__version__ = "0.1.0"

__all__ = [
    "Parameter", "Tensor", "adam_step", "grad_check",
    "Config", "load_config", "save_config",
    "ObjectState", "decode_box", "encode_targets",
    "TrackRun", "aggregate", "center_distance", "iou3d",
    "ope_precision", "ope_success",
    "TrackerModel", "EmptyRegionError", "GridSpec", "PillarSet",
    "build_pillar_set", "TrackletParams", "gen_synthetic_tracklet",
    "Frame", "TrainSample", "make_train_sample", "track_sequence",
    "TrainResult", "build_model", "train",
    "__version__",
]
