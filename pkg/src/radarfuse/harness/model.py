"""Two-branch fusion detector assembled from the backbone, motion encoder and heads.

Data flow per frame:

* LiDAR: ground points (z below ``ground_clip``) removed, four SA stages.
* Radar: four SA stages; with motion-aware encoding on, each stage output is
  replaced by its enhanced features before feeding the next stage, and a
  motion probability is produced per keypoint.
* Fusion: final radar features pass through a learned linear map into a
  shared width; every final LiDAR keypoint concatenates the projection of its
  nearest final radar keypoint (zeros beyond ``fusion_radius``).
* Heads: one per branch. The LiDAR head gives the detections.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import NonFiniteError, Tensor
from ..backbone import StageOutput, encode_cloud, init_backbone_params
from ..dmae import dmae_forward, init_dmae_params, label_point_motion, motion_loss_layer, motion_loss_total
from ..heads import (
    BoxTargets,
    assign_targets,
    classification_terms,
    decode_boxes_tensor,
    decode_predictions,
    head_forward,
    init_head_params,
    regression_components,
)
from ..xua import aligned_lidar_loss, delta_d, match_boxes
from .config import RunConfig

LIDAR_IN = 1  # intensity
RADAR_IN = 3  # v_rel, v_abs, rcs (scaled)
_VEL_SCALE = 0.2
_RCS_SCALE = 0.1


class TrainingError(RuntimeError):
    pass


def pad_cloud(cloud: np.ndarray, minimum: int) -> np.ndarray:
    """Repeat rows cyclically until the cloud has ``minimum`` rows.

    Farthest-point sampling picks exact duplicates last and max-pooling
    ignores them, so padding does not change which distinct points are seen.
    """
    n = cloud.shape[0]
    if n >= minimum:
        return cloud
    if n == 0:
        raise TrainingError("cannot pad an empty cloud")
    reps = int(math.ceil(minimum / n))
    return np.tile(cloud, (reps, 1))[:minimum]


@dataclass
class FrameInput:
    frame_id: int
    lidar_xyz: np.ndarray
    lidar_feat: np.ndarray
    radar_xyz: np.ndarray
    radar_feat: np.ndarray
    radar_vel: np.ndarray
    radar_count: int  # distinct radar points before padding
    radar_labels: np.ndarray  # per padded radar row
    gt_boxes: np.ndarray
    gt_classes: np.ndarray
    gt_moving: np.ndarray


def prepare_frame(frame, cfg: RunConfig) -> FrameInput:
    m = cfg.model
    lidar = np.asarray(frame.lidar, dtype=np.float64).reshape(-1, 4)
    lidar = lidar[lidar[:, 2] > m.ground_clip]
    if lidar.shape[0] == 0:
        lidar = np.asarray(frame.lidar, dtype=np.float64).reshape(-1, 4)
    lidar = pad_cloud(lidar, m.lidar_keypoints[0])
    radar = np.asarray(frame.radar, dtype=np.float64).reshape(-1, 6)
    count = radar.shape[0]
    labels = label_point_motion(radar[:, :3], frame.boxes, frame.moving)
    radar = pad_cloud(radar, m.radar_keypoints[0])
    labels = labels[np.arange(radar.shape[0]) % count]
    feat = np.column_stack([radar[:, 3] * _VEL_SCALE, radar[:, 4] * _VEL_SCALE, radar[:, 5] * _RCS_SCALE])
    return FrameInput(
        frame_id=frame.frame_id,
        lidar_xyz=lidar[:, :3].copy(),
        lidar_feat=lidar[:, 3:4].copy(),
        radar_xyz=radar[:, :3].copy(),
        radar_feat=feat,
        radar_vel=radar[:, 3:5] * _VEL_SCALE,
        radar_count=count,
        radar_labels=labels,
        gt_boxes=frame.boxes,
        gt_classes=frame.class_ids,
        gt_moving=frame.moving,
    )


@dataclass
class ForwardResult:
    lidar_stages: list[StageOutput]
    radar_stages: list[StageOutput]
    motion: list[Tensor]  # per radar stage, empty when the motion encoder is off
    lidar_raw: Tensor
    radar_raw: Tensor


class FusionDetector:
    def __init__(self, cfg: RunConfig, params: dict[str, Tensor] | None = None):
        self.cfg = cfg
        self.lidar_cfgs = cfg.lidar_stages()
        self.radar_cfgs = cfg.radar_stages()
        self.params = params if params is not None else self.init_params(np.random.default_rng(cfg.seed))

    def init_params(self, rng: np.random.Generator) -> dict[str, Tensor]:
        m = self.cfg.model
        p: dict[str, Tensor] = {}
        p.update(init_backbone_params(rng, LIDAR_IN, self.lidar_cfgs, "lidar"))
        p.update(init_backbone_params(rng, RADAR_IN, self.radar_cfgs, "radar"))
        # motion-encoder parameters exist even when the encoder is off so that
        # every ablation cell starts from identical backbone and head weights
        for i, sc in enumerate(self.radar_cfgs):
            p.update(init_dmae_params(rng, sc.out_width, f"dmae{i}"))
        rw = self.radar_cfgs[-1].out_width
        p["fuse.w"] = Tensor(rng.normal(0.0, math.sqrt(1.0 / rw), size=(rw, m.fusion_width)), requires_grad=True, name="fuse.w")
        p["fuse.b"] = Tensor(np.zeros((1, m.fusion_width)), requires_grad=True, name="fuse.b")
        p.update(init_head_params(rng, self.lidar_cfgs[-1].out_width + m.fusion_width, m.head_hidden, "head_l"))
        p.update(init_head_params(rng, rw, m.head_hidden, "head_r"))
        return p

    def trainable(self) -> dict[str, Tensor]:
        if self.cfg.dmae.enabled:
            return self.params
        return {k: v for k, v in self.params.items() if not k.startswith("dmae")}

    def _fps_seed(self, n: int, frame_id: int) -> int:
        if not self.cfg.model.random_fps_seed:
            return 0
        return int(np.random.default_rng([self.cfg.seed, frame_id]).integers(n))

    def forward(self, fi: FrameInput) -> ForwardResult:
        p = self.params
        lidar_stages = encode_cloud(
            fi.lidar_xyz, fi.lidar_feat, self.lidar_cfgs, p, "lidar",
            seed_index=self._fps_seed(fi.lidar_xyz.shape[0], fi.frame_id),
        )
        motion: list[Tensor] = []
        hook = None
        if self.cfg.dmae.enabled:
            def hook(i: int, out: StageOutput) -> StageOutput:
                h, y_hat = dmae_forward(out.features, out.velocity, p, f"dmae{i}")
                motion.append(y_hat)
                out.features = h
                return out

        radar_stages = encode_cloud(
            fi.radar_xyz, fi.radar_feat, self.radar_cfgs, p, "radar",
            velocity=fi.radar_vel, seed_index=self._fps_seed(fi.radar_xyz.shape[0], fi.frame_id), stage_hook=hook,
        )
        lk = lidar_stages[-1]
        rk = radar_stages[-1]
        proj = rk.features @ p["fuse.w"] + p["fuse.b"]
        d = np.linalg.norm(lk.keypoints[:, None, :] - rk.keypoints[None, :, :], axis=-1)
        nearest = np.argmin(d, axis=1)
        mask = (d[np.arange(d.shape[0]), nearest] <= self.cfg.model.fusion_radius).astype(np.float64)
        fused = ad.concat([lk.features, ad.gather(proj, nearest, axis=0) * mask[:, None]], axis=1)
        lidar_raw = head_forward(fused, p, "head_l")
        radar_raw = head_forward(rk.features, p, "head_r")
        return ForwardResult(lidar_stages, radar_stages, motion, lidar_raw, radar_raw)

    def predict(self, fi: FrameInput):
        out = self.forward(fi)
        e = self.cfg.eval
        preds = decode_predictions(out.lidar_raw.data, out.lidar_stages[-1].keypoints, e.objectness_threshold, e.nms_threshold)
        return preds, out


@dataclass
class LossTerms:
    total: Tensor
    terms: dict[str, Tensor]
    k: int = 0

    def values(self) -> dict[str, float]:
        return {name: float(t.data) for name, t in self.terms.items()}


def _guard(name: str, fn):
    try:
        value = fn()
    except NonFiniteError as exc:
        raise TrainingError(f"non-finite value in loss term {name!r}: {exc}") from exc
    if not np.all(np.isfinite(value.data)):
        raise TrainingError(f"loss term {name!r} is not finite")
    return value


def motion_labels_for(fi: FrameInput, stage: StageOutput) -> np.ndarray:
    return fi.radar_labels[stage.source]


def compute_losses(model: FusionDetector, fi: FrameInput, out: ForwardResult | None = None) -> LossTerms:
    cfg = model.cfg
    out = out or model.forward(fi)
    lk = out.lidar_stages[-1].keypoints
    rk = out.radar_stages[-1].keypoints
    t_l: BoxTargets = assign_targets(lk, fi.gt_boxes, fi.gt_classes)
    t_r: BoxTargets = assign_targets(rk, fi.gt_boxes, fi.gt_classes)
    terms: dict[str, Tensor] = {}

    reg_l = regression_components(out.lidar_raw, t_l)
    cls_l = classification_terms(out.lidar_raw, t_l)
    k = 0
    if cfg.xua.enabled:
        def lidar_term():
            nonlocal k
            pairs = np.zeros((0, 2), dtype=np.int64)
            delta = None
            fg_l, fg_r = t_l.fg_index, t_r.fg_index
            if fg_l.size and fg_r.size:
                reg_l_rows = ad.gather(out.lidar_raw, fg_l, axis=0)
                reg_r_rows = ad.gather(out.radar_raw, fg_r, axis=0)
                d_l = decode_boxes_tensor(ad.gather(reg_l_rows, list(range(8)), axis=1), lk[fg_l], t_l.class_ids[fg_l])
                d_r = decode_boxes_tensor(ad.gather(reg_r_rows, list(range(8)), axis=1), rk[fg_r], t_r.class_ids[fg_r])
                gate = cfg.xua.gate if cfg.xua.gate > 0 else None
                match = match_boxes(d_l.data, d_r.data, gate=gate)
                pairs = match.pairs
                k = match.k
                if k:
                    delta = delta_d(ad.gather(d_l, pairs[:, 0], axis=0), ad.gather(d_r, pairs[:, 1], axis=0))
            return aligned_lidar_loss(reg_l, cls_l, t_l.fg_index, pairs, delta, cfg.xua.lam)

        terms["lidar"] = _guard("lidar", lidar_term)
    else:
        def plain():
            cls = ad.reduce_mean(cls_l)
            if reg_l is None:
                return cls
            return ad.reduce_sum(reg_l) * (1.0 / reg_l.shape[0]) + cls

        terms["lidar"] = _guard("lidar", plain)

    def radar_term():
        reg_r = regression_components(out.radar_raw, t_r)
        cls = ad.reduce_mean(classification_terms(out.radar_raw, t_r))
        if reg_r is None:
            return cls
        return ad.reduce_sum(reg_r) * (1.0 / reg_r.shape[0]) + cls

    terms["radar"] = _guard("radar", radar_term)
    w = cfg.loss
    total = w.lidar_weight * terms["lidar"] + w.radar_weight * terms["radar"]
    if cfg.dmae.enabled and out.motion:
        def motion_term():
            layers = [
                motion_loss_layer(y_hat, motion_labels_for(fi, st), cfg.dmae.alpha, cfg.dmae.gamma)
                for y_hat, st in zip(out.motion, out.radar_stages)
            ]
            return motion_loss_total(layers)

        terms["motion"] = _guard("motion", motion_term)
        total = total + w.motion_weight * terms["motion"]
    terms["total"] = total
    return LossTerms(total=total, terms=terms, k=k)
