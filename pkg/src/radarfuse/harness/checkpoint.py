"""Binary checkpoints: a JSON header followed by raw little-endian float64 blocks.

Layout: ``b"RFCK"``, uint32 format version, uint64 header length, header
(compact, key-sorted JSON), then every array in header order. Writing is
deterministic, so save -> load -> save reproduces the file byte for byte.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"RFCK"
FORMAT_VERSION = 1
_F64 = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    config_hash: str
    epoch: int
    opt_step: int = 0
    opt_m: dict[str, np.ndarray] = field(default_factory=dict)
    opt_v: dict[str, np.ndarray] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION


def _blocks(ck: Checkpoint):
    for group, arrays in (("param", ck.params), ("m", ck.opt_m), ("v", ck.opt_v)):
        for name in sorted(arrays):
            yield group, name, np.asarray(arrays[name], dtype=np.float64)


def to_bytes(ck: Checkpoint) -> bytes:
    entries = []
    payload = []
    offset = 0
    for group, name, arr in _blocks(ck):
        data = np.ascontiguousarray(arr, dtype=_F64).tobytes()
        entries.append({"group": group, "name": name, "shape": list(arr.shape), "offset": offset})
        payload.append(data)
        offset += len(data)
    header = {
        "config_hash": ck.config_hash,
        "epoch": int(ck.epoch),
        "format_version": FORMAT_VERSION,
        "opt_step": int(ck.opt_step),
        "tensors": entries,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(hbytes)) + hbytes + b"".join(payload)


def from_bytes(raw: bytes) -> Checkpoint:
    if raw[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if len(raw) < 16:
        raise CheckpointError("truncated checkpoint header")
    version, hlen = struct.unpack("<IQ", raw[4:16])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}")
    try:
        header = json.loads(raw[16 : 16 + hlen])
    except ValueError as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    base = 16 + hlen
    groups: dict[str, dict[str, np.ndarray]] = {"param": {}, "m": {}, "v": {}}
    for e in header["tensors"]:
        n = int(np.prod(e["shape"], dtype=np.int64))
        start = base + e["offset"]
        end = start + n * _F64.itemsize
        if end > len(raw):
            raise CheckpointError(f"tensor {e['name']} runs past the end of the file")
        groups[e["group"]][e["name"]] = np.frombuffer(raw[start:end], dtype=_F64).reshape(e["shape"]).copy()
    return Checkpoint(
        params=groups["param"],
        config_hash=header["config_hash"],
        epoch=header["epoch"],
        opt_step=header["opt_step"],
        opt_m=groups["m"],
        opt_v=groups["v"],
        format_version=version,
    )


def save(path: str | Path, ck: Checkpoint) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(to_bytes(ck))
    return p


def load(path: str | Path) -> Checkpoint:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"checkpoint not found: {p}")
    return from_bytes(p.read_bytes())
