"""Data loading, the deterministic training loop and held-out evaluation."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .. import autodiff as ad
from ..dmae import threshold_baseline
from ..evalkit.metrics import FrameDetections, evaluate
from ..simkit import gen_dataset
from . import checkpoint as ckpt
from .config import RunConfig
from .formats import load_frames
from .model import FusionDetector, FrameInput, TrainingError, compute_losses, prepare_frame

CHECKPOINT_NAME = "checkpoint.rfck"
METRICS_NAME = "metrics.json"


@dataclass
class DataSplit:
    train: list
    test: list
    split_hash: str


def _frames_digest(frames: Sequence) -> str:
    h = hashlib.sha256()
    for f in frames:
        h.update(np.int64(f.frame_id).tobytes())
        h.update(np.ascontiguousarray(f.lidar, dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(f.radar, dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(f.boxes, dtype=np.float64).tobytes())
    return h.hexdigest()


def load_data(cfg: RunConfig) -> DataSplit:
    """Frames from ``data.path`` when set, otherwise simulated from ``data.sim_seed``.

    The first ``train_frames`` frames train, the rest are held out. The split
    hash covers frame ids and contents of both halves.
    """
    d = cfg.data
    if d.path:
        frames = load_frames(d.path)
        if len(frames) < d.frames:
            raise FileNotFoundError(f"{d.path} holds {len(frames)} frames, config asks for {d.frames}")
        frames = frames[: d.frames]
    else:
        frames = gen_dataset(d.sim_seed, d.frames, cfg.scene_config())
    train, test = frames[: d.train_frames], frames[d.train_frames :]
    digest = hashlib.sha256(
        (_frames_digest(train) + ":" + _frames_digest(test)).encode()
    ).hexdigest()[:16]
    return DataSplit(train, test, digest)


@dataclass
class TrainResult:
    model: FusionDetector
    epoch_losses: list[dict[str, float]]
    opt_state: ad.AdamState
    checkpoint_path: Path | None = None
    matched_pairs: list[float] = field(default_factory=list)


def make_checkpoint(model: FusionDetector, state: ad.AdamState, epoch: int) -> ckpt.Checkpoint:
    return ckpt.Checkpoint(
        params={k: v.data for k, v in model.params.items()},
        config_hash=model.cfg.hash(),
        epoch=epoch,
        opt_step=state.step,
        opt_m=dict(state.m),
        opt_v=dict(state.v),
    )


def model_from_checkpoint(cfg: RunConfig, ck: ckpt.Checkpoint) -> FusionDetector:
    model = FusionDetector(cfg)
    missing = set(model.params) - set(ck.params)
    if missing:
        raise ckpt.CheckpointError(f"checkpoint lacks parameters: {', '.join(sorted(missing))}")
    for name, t in model.params.items():
        if ck.params[name].shape != t.shape:
            raise ckpt.CheckpointError(f"{name}: checkpoint shape {ck.params[name].shape}, model {t.shape}")
        t.data = ck.params[name].copy()
    return model


def train_step(model: FusionDetector, fi: FrameInput, state: ad.AdamState, hyper: ad.AdamHyper):
    params = model.trainable()
    with ad.Tape() as tape:
        losses = compute_losses(model, fi)
    grads = tape.backward(losses.total, params)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for {name} on frame {fi.frame_id}")
    ad.optimizer_step(params, grads, state, hyper)
    return losses


def train(
    cfg: RunConfig,
    train_frames: Sequence,
    out_dir: str | Path | None = None,
    log: Callable[[str], None] | None = None,
) -> TrainResult:
    """Adam over single frames, one shuffled pass per epoch.

    The shuffle order of epoch ``e`` comes from ``default_rng([seed, e])`` so
    runs are reproducible. With ``out_dir`` the checkpoint is rewritten after
    every epoch.
    """
    cfg.validate()
    model = FusionDetector(cfg)
    inputs = [prepare_frame(f, cfg) for f in train_frames]
    o = cfg.optim
    hyper = ad.AdamHyper(o.lr, o.beta1, o.beta2, o.eps, o.weight_decay)
    state = ad.AdamState()
    history: list[dict[str, float]] = []
    pairs_per_epoch: list[float] = []
    path = None
    for epoch in range(o.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(inputs))
        sums: dict[str, float] = {}
        k_total = 0
        for i in order:
            losses = train_step(model, inputs[i], state, hyper)
            for name, v in losses.values().items():
                sums[name] = sums.get(name, 0.0) + v
            k_total += losses.k
        mean = {name: v / max(1, len(inputs)) for name, v in sums.items()}
        history.append(mean)
        pairs_per_epoch.append(k_total / max(1, len(inputs)))
        if log:
            log(f"epoch {epoch + 1}/{o.epochs} " + " ".join(f"{k}={v:.4f}" for k, v in mean.items()))
        if out_dir is not None:
            path = ckpt.save(Path(out_dir) / CHECKPOINT_NAME, make_checkpoint(model, state, epoch + 1))
    return TrainResult(model, history, state, path, pairs_per_epoch)


def motion_accuracy(model: FusionDetector, fi: FrameInput, out) -> tuple[int, int, int]:
    """(correct encoder, correct threshold baseline, count) at distinct first-stage radar keypoints."""
    st = out.radar_stages[0]
    raw = st.source % fi.radar_count
    _, first = np.unique(raw, return_index=True)
    labels = fi.radar_labels[st.source[first]]
    base = threshold_baseline(st.velocity[first])
    base_ok = int(np.sum(base == labels))
    if not out.motion:
        return 0, base_ok, int(first.size)
    pred = (out.motion[0].data[first] >= 0.5).astype(np.int64)
    return int(np.sum(pred == labels)), base_ok, int(first.size)


def evaluate_model(model: FusionDetector, frames: Sequence) -> dict:
    cfg = model.cfg
    dets = []
    ok = base_ok = total = 0
    for f in frames:
        fi = prepare_frame(f, cfg)
        preds, out = model.predict(fi)
        dets.append(
            FrameDetections.build(
                [p.box.as_array() for p in preds],
                [p.label for p in preds],
                [p.confidence for p in preds],
                fi.gt_boxes,
                fi.gt_classes,
            )
        )
        a, b, n = motion_accuracy(model, fi, out)
        ok, base_ok, total = ok + a, base_ok + b, total + n
    report = evaluate(dets, cfg.eval_config())
    report["motion"] = {
        "points": total,
        "encoder_accuracy": ok / total if (total and cfg.dmae.enabled) else None,
        "threshold_accuracy": base_ok / total if total else None,
    }
    return report


def build_metrics(cfg: RunConfig, split: DataSplit, result: TrainResult, report: dict) -> dict:
    return {
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "split_hash": split.split_hash,
        "dmae": cfg.dmae.enabled,
        "xua": cfg.xua.enabled,
        "lambda": cfg.xua.lam,
        "epochs": cfg.optim.epochs,
        "train_frames": len(split.train),
        "test_frames": len(split.test),
        "epoch_losses": result.epoch_losses,
        "matched_pairs": result.matched_pairs,
        "eval": report,
    }


def dumps_metrics(metrics: dict) -> str:
    return json.dumps(metrics, sort_keys=True, indent=2) + "\n"


def write_metrics(path: str | Path, metrics: dict) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(dumps_metrics(metrics))
    return p


def run(cfg: RunConfig, out_dir: str | Path | None = None, split: DataSplit | None = None, log=None) -> dict:
    """Train, evaluate on the held-out frames and return the metrics dict."""
    split = split or load_data(cfg)
    result = train(cfg, split.train, out_dir, log)
    report = evaluate_model(result.model, split.test)
    metrics = build_metrics(cfg, split, result, report)
    if out_dir is not None:
        write_metrics(Path(out_dir) / METRICS_NAME, metrics)
    return metrics
