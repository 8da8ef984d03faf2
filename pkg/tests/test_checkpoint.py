"""Binary checkpoint format."""
from __future__ import annotations

import numpy as np
import pytest

from radarfuse.harness import checkpoint as ckpt


def _ck(rng):
    return ckpt.Checkpoint(
        params={"a.w": rng.normal(size=(3, 4)), "b": rng.normal(size=(1, 2)), "s": np.array(1.5)},
        config_hash="0123456789abcdef",
        epoch=3,
        opt_step=12,
        opt_m={"a.w": rng.normal(size=(3, 4))},
        opt_v={"a.w": rng.uniform(size=(3, 4))},
    )


def test_round_trip_exact(tmp_path, rng):
    ck = _ck(rng)
    p = ckpt.save(tmp_path / "x.rfck", ck)
    back = ckpt.load(p)
    assert back.config_hash == ck.config_hash and back.epoch == 3 and back.opt_step == 12
    for k, v in ck.params.items():
        assert back.params[k].shape == v.shape and back.params[k].tobytes() == v.tobytes()
    assert back.opt_v["a.w"].tobytes() == ck.opt_v["a.w"].tobytes()


def test_save_load_save_bytes(tmp_path, rng):
    p1 = ckpt.save(tmp_path / "1.rfck", _ck(rng))
    p2 = ckpt.save(tmp_path / "2.rfck", ckpt.load(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_insertion_order_irrelevant(rng):
    ck = _ck(rng)
    flipped = ckpt.Checkpoint(dict(reversed(list(ck.params.items()))), ck.config_hash, ck.epoch, ck.opt_step, ck.opt_m, ck.opt_v)
    assert ckpt.to_bytes(ck) == ckpt.to_bytes(flipped)


def test_corrupt(rng):
    raw = ckpt.to_bytes(_ck(rng))
    with pytest.raises(ckpt.CheckpointError):
        ckpt.from_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ckpt.CheckpointError):
        ckpt.from_bytes(raw[:-8])
    with pytest.raises(ckpt.CheckpointError):
        ckpt.from_bytes(raw[:4] + b"\x09\x00\x00\x00" + raw[8:])


def test_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        ckpt.load(tmp_path / "none.rfck")
