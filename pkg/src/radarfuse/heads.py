"""Per-keypoint detection heads, target assignment and the detection loss.

Every final-stage keypoint regresses 8 values relative to itself::

    (dx, dy, dz, log(l/al), log(w/aw), log(h/ah), sin(theta), cos(theta))

where ``(al, aw, ah)`` is the anchor size of the class, plus one logit per
class and an objectness logit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dmae import focal_terms
from .geom3d import Box7, bev_iou_matrix, points_in_box

CLASS_NAMES: tuple[str, ...] = ("Car", "Pedestrian", "Cyclist")
NUM_CLASSES = len(CLASS_NAMES)
#: anchor (l, w, h) per class, meters
ANCHORS = np.array([[4.0, 1.8, 1.6], [0.6, 0.6, 1.7], [1.8, 0.6, 1.7]])
REG_DIM = 8
OUT_DIM = REG_DIM + NUM_CLASSES + 1
#: regression components folded onto the 7 box attributes (heading takes sin+cos)
ATTRIBUTE_COLUMNS = ("x", "y", "z", "l", "w", "h", "theta")

CLS_ALPHA = 0.25
CLS_GAMMA = 2.0


class HeadError(ValueError):
    pass


def class_index(name: str) -> int:
    try:
        return CLASS_NAMES.index(name)
    except ValueError:
        raise HeadError(f"unknown class {name!r}; expected one of {CLASS_NAMES}") from None


@dataclass
class BoxPrediction:
    box: Box7
    class_scores: np.ndarray
    objectness: float
    keypoint: int = -1

    @property
    def label(self) -> int:
        return int(np.argmax(self.class_scores))

    @property
    def confidence(self) -> float:
        return float(self.objectness * np.max(self.class_scores))


@dataclass
class BoxTargets:
    """Per-keypoint targets; rows of ``reg`` are meaningful only where ``foreground``."""

    foreground: np.ndarray  # bool, M
    class_ids: np.ndarray  # int, M (-1 for background)
    reg: np.ndarray  # M x 8
    owner: np.ndarray  # index of the assigned annotation, -1 for background
    boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 7)))

    @property
    def fg_index(self) -> np.ndarray:
        return np.flatnonzero(self.foreground)


def encode_box(box, class_id: int, keypoint: np.ndarray, anchors: np.ndarray = ANCHORS) -> np.ndarray:
    b = box.as_array() if isinstance(box, Box7) else np.asarray(box, dtype=np.float64)
    a = anchors[class_id]
    kp = np.asarray(keypoint, dtype=np.float64)
    return np.array(
        [
            b[0] - kp[0],
            b[1] - kp[1],
            b[2] - kp[2],
            math.log(b[3] / a[0]),
            math.log(b[4] / a[1]),
            math.log(b[5] / a[2]),
            math.sin(b[6]),
            math.cos(b[6]),
        ]
    )


def decode_boxes(reg: np.ndarray, keypoints: np.ndarray, class_ids, anchors: np.ndarray = ANCHORS) -> np.ndarray:
    """Inverse of :func:`encode_box`, vectorised; returns ``M x 7``."""
    reg = np.asarray(reg, dtype=np.float64).reshape(-1, REG_DIM)
    kp = np.asarray(keypoints, dtype=np.float64).reshape(-1, 3)
    a = anchors[np.asarray(class_ids, dtype=np.int64)]
    out = np.empty((reg.shape[0], 7))
    out[:, :3] = kp + reg[:, :3]
    out[:, 3:6] = a * np.exp(reg[:, 3:6])
    out[:, 6] = np.arctan2(reg[:, 6], reg[:, 7])
    out[:, 6] = np.where(out[:, 6] >= np.pi, out[:, 6] - 2 * np.pi, out[:, 6])
    return out


def decode_boxes_tensor(reg: Tensor, keypoints: np.ndarray, class_ids, anchors: np.ndarray = ANCHORS) -> Tensor:
    """Differentiable decode used by the cross-modal alignment loss."""
    kp = np.asarray(keypoints, dtype=np.float64).reshape(-1, 3)
    a = anchors[np.asarray(class_ids, dtype=np.int64)]
    center = ad.gather(reg, [0, 1, 2], axis=1) + kp
    size = ad.exp(ad.gather(reg, [3, 4, 5], axis=1)) * a
    theta = ad.atan2(ad.gather(reg, [6], axis=1), ad.gather(reg, [7], axis=1))
    return ad.concat([center, size, theta], axis=1)


def init_head_params(rng: np.random.Generator, in_width: int, hidden: int, prefix: str) -> dict[str, Tensor]:
    w0 = rng.normal(0.0, math.sqrt(2.0 / in_width), size=(in_width, hidden))
    w1 = rng.normal(0.0, math.sqrt(1.0 / hidden), size=(hidden, OUT_DIM)) * 0.1
    b1 = np.zeros((1, OUT_DIM))
    b1[0, 7] = 1.0  # cos(theta) starts positive so the heading decode is well defined
    # prior probability ~0.1 for objectness and classes
    b1[0, REG_DIM:] = -math.log((1 - 0.1) / 0.1)
    return {
        f"{prefix}.w0": Tensor(w0, requires_grad=True, name=f"{prefix}.w0"),
        f"{prefix}.b0": Tensor(np.zeros((1, hidden)), requires_grad=True, name=f"{prefix}.b0"),
        f"{prefix}.w1": Tensor(w1, requires_grad=True, name=f"{prefix}.w1"),
        f"{prefix}.b1": Tensor(b1, requires_grad=True, name=f"{prefix}.b1"),
    }


def head_forward(features: Tensor, params: dict[str, Tensor], prefix: str) -> Tensor:
    """Raw head output, ``M x (8 + classes + 1)``."""
    w0 = params[f"{prefix}.w0"]
    if features.shape[1] != w0.shape[0]:
        raise HeadError(f"head expects width {w0.shape[0]}, got {features.shape[1]}")
    hidden = ad.relu(features @ w0 + params[f"{prefix}.b0"])
    return hidden @ params[f"{prefix}.w1"] + params[f"{prefix}.b1"]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def nms(boxes: np.ndarray, scores: np.ndarray, iou_threshold: float) -> np.ndarray:
    """Greedy BEV non-maximum suppression; returns kept indices by descending score."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 7)
    order = np.argsort(-np.asarray(scores), kind="stable")
    if order.size == 0:
        return order
    iou = bev_iou_matrix(boxes, boxes)
    keep: list[int] = []
    suppressed = np.zeros(boxes.shape[0], dtype=bool)
    for i in order:
        if suppressed[i]:
            continue
        keep.append(int(i))
        suppressed |= iou[i] >= iou_threshold
    return np.array(keep, dtype=np.int64)


def decode_predictions(
    raw: np.ndarray,
    keypoints: np.ndarray,
    objectness_threshold: float = 0.3,
    nms_threshold: float = 0.5,
    anchors: np.ndarray = ANCHORS,
) -> list[BoxPrediction]:
    raw = np.asarray(raw, dtype=np.float64)
    keypoints = np.asarray(keypoints, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[1] != OUT_DIM or raw.shape[0] != keypoints.shape[0]:
        raise HeadError(f"head output {raw.shape} does not fit {keypoints.shape[0]} keypoints")
    cls = _sigmoid(raw[:, REG_DIM : REG_DIM + NUM_CLASSES])
    obj = _sigmoid(raw[:, -1])
    labels = np.argmax(cls, axis=1)
    boxes = decode_boxes(raw[:, :REG_DIM], keypoints, labels, anchors)
    cand = np.flatnonzero(obj >= objectness_threshold)
    if cand.size == 0:
        return []
    conf = obj[cand] * cls[cand, labels[cand]]
    kept = cand[nms(boxes[cand], conf, nms_threshold)]
    return [BoxPrediction(Box7.from_array(boxes[i]), cls[i].copy(), float(obj[i]), int(i)) for i in kept]


def detect_head(
    features: Tensor,
    keypoints: np.ndarray,
    params: dict[str, Tensor],
    prefix: str,
    objectness_threshold: float = 0.3,
    nms_threshold: float = 0.5,
) -> list[BoxPrediction]:
    raw = head_forward(features, params, prefix)
    return decode_predictions(raw.data, keypoints, objectness_threshold, nms_threshold)


def assign_targets(keypoints: np.ndarray, boxes: np.ndarray, class_ids: Sequence[int]) -> BoxTargets:
    """Foreground = keypoint inside a GT box; ties go to the nearest center."""
    kp = np.asarray(keypoints, dtype=np.float64).reshape(-1, 3)
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 7)
    class_ids = np.asarray(class_ids, dtype=np.int64).reshape(-1)
    m = kp.shape[0]
    owner = np.full(m, -1, dtype=np.int64)
    if boxes.shape[0]:
        inside = np.stack([points_in_box(kp, b) for b in boxes], axis=1)
        dist = np.linalg.norm(kp[:, None, :] - boxes[None, :, :3], axis=-1)
        dist = np.where(inside, dist, np.inf)
        hit = inside.any(axis=1)
        owner[hit] = np.argmin(dist[hit], axis=1)
    fg = owner >= 0
    reg = np.zeros((m, REG_DIM))
    cids = np.full(m, -1, dtype=np.int64)
    for i in np.flatnonzero(fg):
        j = owner[i]
        cids[i] = class_ids[j]
        reg[i] = encode_box(boxes[j], class_ids[j], kp[i])
    return BoxTargets(foreground=fg, class_ids=cids, reg=reg, owner=owner, boxes=boxes)


def regression_components(raw: Tensor, targets: BoxTargets) -> Tensor | None:
    """Smooth-L1 per foreground keypoint folded onto the 7 attributes (``F x 7``)."""
    fg = targets.fg_index
    if fg.size == 0:
        return None
    pred = ad.gather(ad.gather(raw, list(range(REG_DIM)), axis=1), fg, axis=0)
    sl1 = ad.smooth_l1(pred - targets.reg[fg])
    fold = np.zeros((REG_DIM, 7))
    fold[np.arange(6), np.arange(6)] = 1.0
    fold[6, 6] = fold[7, 6] = 1.0
    return sl1 @ fold


def classification_terms(raw: Tensor, targets: BoxTargets) -> Tensor:
    """Focal loss per keypoint, summed over classes and objectness (``M``)."""
    m = raw.shape[0]
    y = np.zeros((m, NUM_CLASSES + 1))
    fg = targets.fg_index
    y[fg, targets.class_ids[fg]] = 1.0
    y[fg, NUM_CLASSES] = 1.0
    logits = ad.gather(raw, list(range(REG_DIM, OUT_DIM)), axis=1)
    terms = focal_terms(ad.sigmoid(logits), y, CLS_ALPHA, CLS_GAMMA)
    return ad.reduce_sum(terms, axis=1)


def reg_loss(raw: Tensor, targets: BoxTargets) -> Tensor:
    comps = regression_components(raw, targets)
    if comps is None:
        return Tensor(np.array(0.0))
    return ad.reduce_sum(comps) * (1.0 / comps.shape[0])


def cls_loss(raw: Tensor, targets: BoxTargets) -> Tensor:
    return ad.reduce_mean(classification_terms(raw, targets))


def lidar_loss(raw: Tensor, targets: BoxTargets) -> Tensor:
    return reg_loss(raw, targets) + cls_loss(raw, targets)
