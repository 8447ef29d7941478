"""File formats: point clouds, sequence manifests, checkpoints, CSV outputs.

Point files are raw little-endian float32 (x, y, z, intensity) quadruplets;
intensity is read and discarded, and written as zero.  A manifest is plain
text, one frame per line: a point-file path (relative to the manifest)
followed by the 7 ground-truth reals (x y z w l h theta).  Lines starting
with '#' are comments; optional ``category <label>`` and ``tracklet <id>``
header lines may precede the frames.

A checkpoint is a binary container: magic ``PLTK``, a format version, a
flags word (bit 0: Adam moments included), a record count, then one record
per array: name length + utf-8 name, a dtype tag (0=float64, 1=float32), a
kind tag (0=buffer, 1=parameter), the rank and extents, and the raw
little-endian values.  Parameter records optionally append their two
moment arrays and the step count.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import ObjectState

CHECKPOINT_MAGIC = b"PLTK"
CHECKPOINT_VERSION = 1
_DTYPE_TAGS = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
_TAG_OF_DTYPE = {np.dtype(np.float64): 0, np.dtype(np.float32): 1}


class FormatError(ValueError):
    """Malformed binary or text input file."""


# -- point clouds -------------------------------------------------------


def read_points(path) -> np.ndarray:
    """Read (N, 3) xyz from a float32 quadruplet file; intensity dropped."""
    raw = Path(path).read_bytes()
    if len(raw) % 16 != 0:
        offset = len(raw) - len(raw) % 16
        raise FormatError(f"{path}: size {len(raw)} is not a multiple of 16 "
                          f"(trailing bytes at offset {offset})")
    data = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    return data[:, 0:3].astype(np.float64)


def write_points(path, points: np.ndarray) -> None:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    quad = np.zeros((points.shape[0], 4), dtype="<f4")
    quad[:, 0:3] = points.astype(np.float32)
    Path(path).write_bytes(quad.tobytes())


# -- manifests ----------------------------------------------------------


@dataclass
class SequenceManifest:
    frames: list[tuple[str, ObjectState]]
    category: str = "object"
    tracklet_id: str = ""
    base_dir: Path = Path(".")

    def point_path(self, index: int) -> Path:
        return self.base_dir / self.frames[index][0]


def read_manifest(path) -> SequenceManifest:
    path = Path(path)
    frames: list[tuple[str, ObjectState]] = []
    category = "object"
    tracklet_id = path.stem
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        tokens = stripped.split()
        if tokens[0] == "category" and len(tokens) == 2:
            category = tokens[1]
            continue
        if tokens[0] == "tracklet" and len(tokens) == 2:
            tracklet_id = tokens[1]
            continue
        if len(tokens) != 8:
            raise FormatError(f"{path}:{lineno}: expected 'path x y z w l h theta'")
        try:
            vals = [float(t) for t in tokens[1:]]
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: bad number in frame line") from exc
        frames.append((tokens[0], ObjectState(*vals)))
    return SequenceManifest(frames=frames, category=category,
                            tracklet_id=tracklet_id, base_dir=path.parent)


def write_manifest(path, frames, category: str, tracklet_id: str) -> None:
    lines = [f"tracklet {tracklet_id}", f"category {category}"]
    for rel_path, gt in frames:
        lines.append(f"{rel_path} {gt.x!r} {gt.y!r} {gt.z!r} "
                     f"{gt.w!r} {gt.l!r} {gt.h!r} {gt.theta!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_manifest_frames(manifest: SequenceManifest):
    """Materialize manifest entries as in-memory frames."""
    from .tracker import Frame
    return [Frame(points=read_points(manifest.point_path(i)), gt=gt)
            for i, (_, gt) in enumerate(manifest.frames)]


def find_manifests(data_dir) -> list[Path]:
    return sorted(Path(data_dir).glob("*.txt"))


# -- checkpoints --------------------------------------------------------


def _write_array(out, arr: np.ndarray) -> None:
    out.append(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def save_checkpoint(path, model, include_moments: bool = True) -> None:
    """Serialize all parameters and buffers of a model."""
    params = model.parameters()
    buffers = model.buffers()
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION,
                                            1 if include_moments else 0),
              struct.pack("<I", len(params) + len(buffers))]

    def header(name: str, arr: np.ndarray, kind: int):
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<BBB", _TAG_OF_DTYPE[arr.dtype], kind, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))

    for p in params:
        header(p.name, p.data, kind=1)
        _write_array(chunks, p.data)
        if include_moments:
            _write_array(chunks, p.adam_m)
            _write_array(chunks, p.adam_v)
            chunks.append(struct.pack("<Q", p.step_count))
    for name in sorted(buffers):
        arr = buffers[name]
        header(name, arr, kind=0)
        _write_array(chunks, arr)
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path, model) -> None:
    """Restore parameters, buffers, and (when present) Adam moments."""
    raw = Path(path).read_bytes()
    view = memoryview(raw)
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic bytes")
    version, flags = struct.unpack_from("<II", view, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    has_moments = bool(flags & 1)
    (count,) = struct.unpack_from("<I", view, 12)
    pos = 16

    params = {p.name: p for p in model.parameters()}
    buffers = model.buffers()
    seen = set()
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", view, pos)
        pos += 4
        name = bytes(view[pos:pos + name_len]).decode("utf-8")
        pos += name_len
        dtype_tag, kind, rank = struct.unpack_from("<BBB", view, pos)
        pos += 3
        shape = struct.unpack_from(f"<{rank}I", view, pos)
        pos += 4 * rank
        if dtype_tag not in _DTYPE_TAGS:
            raise FormatError(f"{path}: unknown dtype tag {dtype_tag} for {name!r}")
        dtype = _DTYPE_TAGS[dtype_tag]
        size = int(np.prod(shape, dtype=np.int64)) if rank else 1

        def take() -> np.ndarray:
            nonlocal pos
            nbytes = size * dtype.itemsize
            arr = np.frombuffer(view, dtype=dtype, count=size, offset=pos).reshape(shape)
            pos += nbytes
            return arr

        data = take()
        if kind == 1:
            if name not in params:
                raise FormatError(f"{path}: unexpected parameter {name!r}")
            p = params[name]
            if p.data.shape != data.shape:
                raise FormatError(f"{path}: shape mismatch for {name!r}: "
                                  f"{data.shape} vs {p.data.shape}")
            p.data[...] = data
            if has_moments:
                p.adam_m[...] = take()
                p.adam_v[...] = take()
                (p.step_count,) = struct.unpack_from("<Q", view, pos)
                pos += 8
        else:
            if name not in buffers:
                raise FormatError(f"{path}: unexpected buffer {name!r}")
            buffers[name][...] = data
        seen.add(name)

    missing = (set(params) | set(buffers)) - seen
    if missing:
        raise FormatError(f"{path}: missing entries: {sorted(missing)}")


# -- CSV outputs --------------------------------------------------------


def write_loss_log(path, rows: list[dict]) -> None:
    if not rows:
        Path(path).write_text("")
        return
    fieldnames = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def write_predictions(path, run) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "x", "y", "z", "w", "l", "h", "theta", "degenerate"])
        for idx, (p, flag) in enumerate(zip(run.predictions, run.flags)):
            writer.writerow([idx, repr(p.x), repr(p.y), repr(p.z), repr(p.w),
                             repr(p.l), repr(p.h), repr(p.theta), int(flag)])


def read_predictions(path):
    """Returns (states, degenerate_flags)."""
    states, flags = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            states.append(ObjectState(x=float(row["x"]), y=float(row["y"]),
                                      z=float(row["z"]), w=float(row["w"]),
                                      l=float(row["l"]), h=float(row["h"]),
                                      theta=float(row["theta"])))
            flags.append(bool(int(row["degenerate"])))
    return states, flags


def write_metrics_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["sequence", "category", "frames",
                                                "success", "precision", "degenerate"])
        writer.writeheader()
        writer.writerows(rows)


def write_curve_csv(path, thresholds, fractions, label: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([label, "fraction"])
        for t, f in zip(thresholds, fractions):
            writer.writerow([repr(float(t)), repr(float(f))])
