"""Model assembly, loss composition and the training loop."""
from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from conftest import tiny_config
from radarfuse import autodiff as ad
from radarfuse.dmae import motion_loss_layer, motion_loss_total
from radarfuse.harness import checkpoint as ckpt
from radarfuse.harness.config import RunConfig, with_overrides
from radarfuse.harness.model import (
    FusionDetector,
    TrainingError,
    compute_losses,
    pad_cloud,
    prepare_frame,
)
from radarfuse.harness.train import (
    CHECKPOINT_NAME,
    METRICS_NAME,
    dumps_metrics,
    load_data,
    model_from_checkpoint,
    run,
    train,
)
from radarfuse.heads import assign_targets, cls_loss, reg_loss


def test_pad_cloud():
    c = np.arange(6.0).reshape(3, 2)
    assert pad_cloud(c, 2) is c
    assert pad_cloud(c, 7)[:, 0].tolist() == [0, 2, 4, 0, 2, 4, 0]
    with pytest.raises(TrainingError):
        pad_cloud(np.zeros((0, 2)), 3)


def test_prepare_frame_ground_clip_and_padding():
    cfg = tiny_config()
    f = load_data(cfg).train[0]
    fi = prepare_frame(f, cfg)
    assert np.all(fi.lidar_xyz[:, 2] > cfg.model.ground_clip)
    assert fi.radar_xyz.shape[0] >= cfg.model.radar_keypoints[0]
    assert fi.radar_labels.shape[0] == fi.radar_xyz.shape[0]
    assert fi.radar_count == f.radar.shape[0]


def test_ablation_cells_share_initial_weights():
    a = FusionDetector(tiny_config(dmae=False, xua=False))
    b = FusionDetector(tiny_config(dmae=True, xua=True))
    assert a.params.keys() == b.params.keys()
    assert all(np.array_equal(a.params[k].data, b.params[k].data) for k in a.params)
    assert not any(k.startswith("dmae") for k in a.trainable())


def test_xua_off_total_is_plain_sum():
    cfg = tiny_config(xua=False, dmae=True)
    model = FusionDetector(cfg)
    fi = prepare_frame(load_data(cfg).train[0], cfg)
    out = model.forward(fi)
    losses = compute_losses(model, fi, out)
    t_l = assign_targets(out.lidar_stages[-1].keypoints, fi.gt_boxes, fi.gt_classes)
    t_r = assign_targets(out.radar_stages[-1].keypoints, fi.gt_boxes, fi.gt_classes)
    motion = motion_loss_total(
        [motion_loss_layer(y, fi.radar_labels[st.source]) for y, st in zip(out.motion, out.radar_stages)]
    )
    plain = (
        reg_loss(out.lidar_raw, t_l) + cls_loss(out.lidar_raw, t_l)
        + reg_loss(out.radar_raw, t_r) + cls_loss(out.radar_raw, t_r)
        + motion
    )
    assert float(losses.total.data) == float(plain.data)


def test_xua_changes_lidar_term_only():
    on = tiny_config(xua=True)
    off = tiny_config(xua=False)
    fi = prepare_frame(load_data(on).train[0], on)
    a = compute_losses(FusionDetector(on), fi).values()
    b = compute_losses(FusionDetector(off), fi).values()
    assert a["radar"] == b["radar"] and a["motion"] == b["motion"]


def test_one_epoch_smoke_and_checkpoint(tmp_path):
    cfg = tiny_config()
    split = load_data(cfg)
    res = train(cfg, split.train, tmp_path)
    assert len(res.epoch_losses) == 1 and set(res.epoch_losses[0]) == {"lidar", "radar", "motion", "total"}
    ck = ckpt.load(tmp_path / CHECKPOINT_NAME)
    assert ck.config_hash == cfg.hash() and ck.epoch == 1 and ck.opt_step == len(split.train)
    model = model_from_checkpoint(cfg, ck)
    for k, t in res.model.params.items():
        assert model.params[k].data.tobytes() == t.data.tobytes()
    again = ckpt.save(tmp_path / "again.rfck", ck)
    assert again.read_bytes() == (tmp_path / CHECKPOINT_NAME).read_bytes()


def test_overfit_loss_strictly_decreases():
    base = RunConfig()
    cfg = replace(base, data=replace(base.data, frames=12, train_frames=10), optim=replace(base.optim, epochs=5))
    cfg = cfg.validate()
    totals = [e["total"] for e in train(cfg, load_data(cfg).train).epoch_losses]
    assert all(b < a for a, b in zip(totals, totals[1:])), totals


def test_metrics_byte_identical(tmp_path):
    cfg = tiny_config()
    run(cfg, tmp_path / "a")
    run(cfg, tmp_path / "b")
    assert (tmp_path / "a" / METRICS_NAME).read_bytes() == (tmp_path / "b" / METRICS_NAME).read_bytes()


def test_metrics_embed_hash():
    cfg = tiny_config()
    m = run(cfg)
    assert m["config_hash"] == cfg.hash() and cfg.hash() in dumps_metrics(m)
    assert m["eval"]["motion"]["points"] > 0


def test_nonfinite_loss_names_term(monkeypatch):
    cfg = tiny_config()
    model = FusionDetector(cfg)
    fi = prepare_frame(load_data(cfg).train[0], cfg)
    import radarfuse.harness.model as mm

    monkeypatch.setattr(mm, "motion_loss_total", lambda layers: ad.Tensor(np.array(np.nan)))
    with pytest.raises(TrainingError, match="motion"):
        compute_losses(model, fi)


def test_checkpoint_shape_mismatch():
    cfg = tiny_config()
    ck = ckpt.Checkpoint({k: v.data for k, v in FusionDetector(cfg).params.items()}, cfg.hash(), 0)
    ck.params["fuse.b"] = np.zeros((1, 3))
    with pytest.raises(ckpt.CheckpointError):
        model_from_checkpoint(cfg, ck)
