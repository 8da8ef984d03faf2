"""On-disk formats for frames.

Labels are text, one object per line::

    Class x y z l w h theta moving

with ``moving`` 0 or 1. Clouds are packed little-endian float32 records:
LiDAR rows are (x, y, z, intensity), radar rows are (x, y, z, v_rel, v_abs, rcs).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..geom3d import Box7, GeometryError
from ..heads import CLASS_NAMES

LIDAR_STRIDE = 4
RADAR_STRIDE = 6
_DTYPE = np.dtype("<f4")
_FIELDS = ("class", "x", "y", "z", "l", "w", "h", "theta", "moving")


class FormatError(ValueError):
    pass


class LabelFormatError(FormatError):
    def __init__(self, line: int, field: str, message: str):
        super().__init__(f"line {line}, field {field!r}: {message}")
        self.line = line
        self.field = field


class TruncatedCloudError(FormatError):
    def __init__(self, path, offset: int, stride: int):
        super().__init__(
            f"{path}: truncated record at byte offset {offset} (record size {stride * 4} bytes)"
        )
        self.offset = offset


@dataclass(frozen=True)
class Annotation:
    class_id: int
    box: Box7
    moving: bool

    @property
    def class_name(self) -> str:
        return CLASS_NAMES[self.class_id]


def parse_label_line(text: str, line_no: int = 1) -> Annotation:
    parts = text.split()
    if len(parts) != len(_FIELDS):
        raise LabelFormatError(line_no, "*", f"expected {len(_FIELDS)} fields, got {len(parts)}")
    name = parts[0]
    if name not in CLASS_NAMES:
        raise LabelFormatError(line_no, "class", f"unknown class {name!r}")
    vals = []
    for fname, raw in zip(_FIELDS[1:8], parts[1:8]):
        try:
            v = float(raw)
        except ValueError:
            raise LabelFormatError(line_no, fname, f"not a number: {raw!r}") from None
        if not math.isfinite(v):
            raise LabelFormatError(line_no, fname, f"not finite: {raw!r}")
        vals.append(v)
    if parts[8] not in ("0", "1"):
        raise LabelFormatError(line_no, "moving", f"expected 0 or 1, got {parts[8]!r}")
    try:
        box = Box7(*vals)
    except GeometryError as exc:
        raise LabelFormatError(line_no, "l/w/h", str(exc)) from None
    return Annotation(CLASS_NAMES.index(name), box, parts[8] == "1")


def format_label_line(ann: Annotation) -> str:
    b = ann.box
    nums = " ".join(repr(float(v)) for v in (b.x, b.y, b.z, b.l, b.w, b.h, b.theta))
    return f"{CLASS_NAMES[ann.class_id]} {nums} {int(ann.moving)}"


def parse_labels(text: str) -> list[Annotation]:
    out = []
    for i, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        out.append(parse_label_line(line, i))
    return out


def read_labels(path: str | Path) -> list[Annotation]:
    return parse_labels(Path(path).read_text())


def write_labels(path: str | Path, annotations: Iterable[Annotation]) -> None:
    lines = [format_label_line(a) for a in annotations]
    Path(path).write_text("".join(line + "\n" for line in lines))


def write_cloud(path: str | Path, cloud: np.ndarray, stride: int) -> None:
    arr = np.asarray(cloud)
    if arr.size == 0:
        arr = arr.reshape(0, stride)
    if arr.ndim != 2 or arr.shape[1] != stride:
        raise FormatError(f"cloud must be N x {stride}, got {arr.shape}")
    Path(path).write_bytes(np.ascontiguousarray(arr, dtype=_DTYPE).tobytes())


def read_cloud(path: str | Path, stride: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    rec = stride * _DTYPE.itemsize
    if len(raw) % rec:
        raise TruncatedCloudError(path, len(raw) - len(raw) % rec, stride)
    return np.frombuffer(raw, dtype=_DTYPE).reshape(-1, stride).copy()


def frame_paths(root: str | Path, frame_id: int) -> dict[str, Path]:
    base = Path(root) / "frames" / f"{frame_id:06d}"
    return {
        "lidar": base.with_suffix(".lidar.bin"),
        "radar": base.with_suffix(".radar.bin"),
        "labels": base.with_suffix(".txt"),
    }


def write_frame(root: str | Path, frame) -> dict[str, str]:
    """Write one :class:`~radarfuse.simkit.SceneFrame`; returns the relative file names."""
    paths = frame_paths(root, frame.frame_id)
    paths["lidar"].parent.mkdir(parents=True, exist_ok=True)
    write_cloud(paths["lidar"], frame.lidar, LIDAR_STRIDE)
    write_cloud(paths["radar"], frame.radar, RADAR_STRIDE)
    write_labels(paths["labels"], [Annotation(o.class_id, o.box, o.moving) for o in frame.objects])
    return {k: str(v.relative_to(root)) for k, v in paths.items()}


def write_manifest(root: str | Path, payload: dict) -> Path:
    path = Path(root) / "manifest.json"
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return path


def read_manifest(root: str | Path) -> dict:
    path = Path(root) / "manifest.json"
    if not path.is_file():
        raise FileNotFoundError(f"no manifest.json under {root}")
    return json.loads(path.read_text())


def load_frames(root: str | Path, ids: Sequence[int] | None = None) -> list:
    """Read frames written by :func:`write_frame` back as SceneFrames (no radar provenance)."""
    from ..simkit import SceneFrame, objects_from_annotations

    manifest = read_manifest(root)
    frame_ids = ids if ids is not None else [f["id"] for f in manifest["frames"]]
    frames = []
    for fid in frame_ids:
        p = frame_paths(root, fid)
        for key, path in p.items():
            if not path.is_file():
                raise FileNotFoundError(f"frame {fid}: missing {key} file {path}")
        anns = read_labels(p["labels"])
        objects = objects_from_annotations(
            np.array([a.box.as_array() for a in anns]).reshape(-1, 7),
            [a.class_id for a in anns],
            [a.moving for a in anns],
        )
        frames.append(
            SceneFrame(
                frame_id=fid,
                objects=objects,
                lidar=read_cloud(p["lidar"], LIDAR_STRIDE).astype(np.float64),
                radar=read_cloud(p["radar"], RADAR_STRIDE).astype(np.float64),
            )
        )
    return frames
