"""Average precision with greedy confidence-ordered matching and 40-point recall interpolation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..geom3d import in_corridor_mask, iou3d_matrix
from ..heads import CLASS_NAMES

#: IoU threshold per class: cars 0.5, pedestrians 0.25, cyclists 0.25
DEFAULT_IOU_THRESHOLDS = {"Car": 0.5, "Pedestrian": 0.25, "Cyclist": 0.25}
RECALL_POINTS = 40
REGIONS = ("all", "corridor")


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: dict = field(default_factory=lambda: dict(DEFAULT_IOU_THRESHOLDS))
    regions: tuple[str, ...] = REGIONS
    recall_points: int = RECALL_POINTS

    def __post_init__(self):
        for name, thr in self.iou_thresholds.items():
            if not 0.0 < thr <= 1.0:
                raise EvalError(f"IoU threshold for {name} must be in (0, 1], got {thr}")
        for r in self.regions:
            if r not in REGIONS:
                raise EvalError(f"unknown region {r!r}")


@dataclass
class FrameDetections:
    """Predictions and ground truth of one frame as plain arrays."""

    pred_boxes: np.ndarray  # P x 7
    pred_labels: np.ndarray  # P
    pred_scores: np.ndarray  # P
    gt_boxes: np.ndarray  # G x 7
    gt_labels: np.ndarray  # G

    @classmethod
    def build(cls, pred_boxes, pred_labels, pred_scores, gt_boxes, gt_labels) -> "FrameDetections":
        return cls(
            np.asarray(pred_boxes, dtype=np.float64).reshape(-1, 7),
            np.asarray(pred_labels, dtype=np.int64).reshape(-1),
            np.asarray(pred_scores, dtype=np.float64).reshape(-1),
            np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 7),
            np.asarray(gt_labels, dtype=np.int64).reshape(-1),
        )


def _region_mask(boxes: np.ndarray, region: str) -> np.ndarray:
    if region == "all":
        return np.ones(boxes.shape[0], dtype=bool)
    if region == "corridor":
        return in_corridor_mask(boxes)
    raise EvalError(f"unknown region {region!r}")


def match_class(frames: Sequence[FrameDetections], class_id: int, iou_threshold: float, region: str = "all"):
    """Greedy matching for one class. Returns (tp flags by descending score, scores, #GT)."""
    records = []  # (score, frame order, pred order, tp)
    num_gt = 0
    for fi, fr in enumerate(frames):
        gmask = (fr.gt_labels == class_id) & _region_mask(fr.gt_boxes, region)
        pmask = (fr.pred_labels == class_id) & _region_mask(fr.pred_boxes, region)
        gts = fr.gt_boxes[gmask]
        preds = fr.pred_boxes[pmask]
        scores = fr.pred_scores[pmask]
        num_gt += gts.shape[0]
        if preds.shape[0] == 0:
            continue
        order = np.argsort(-scores, kind="stable")
        taken = np.zeros(gts.shape[0], dtype=bool)
        iou = iou3d_matrix(preds, gts) if gts.shape[0] else np.zeros((preds.shape[0], 0))
        for rank, pi in enumerate(order):
            tp = False
            if gts.shape[0]:
                best = int(np.argmax(iou[pi]))
                if iou[pi, best] >= iou_threshold and not taken[best]:
                    taken[best] = True
                    tp = True
            records.append((-scores[pi], fi, rank, tp))
    records.sort(key=lambda r: (r[0], r[1], r[2]))
    tp = np.array([r[3] for r in records], dtype=bool)
    scores = np.array([-r[0] for r in records], dtype=np.float64)
    return tp, scores, num_gt


def precision_recall(tp: np.ndarray, num_gt: int) -> tuple[np.ndarray, np.ndarray]:
    ctp = np.cumsum(tp)
    ranks = np.arange(1, tp.shape[0] + 1)
    precision = ctp / ranks if tp.size else np.zeros(0)
    recall = ctp / num_gt if num_gt else np.zeros_like(precision)
    return precision, recall


def interpolated_ap(precision: np.ndarray, recall: np.ndarray, recall_points: int = RECALL_POINTS) -> float:
    """Mean interpolated precision at recall 1/R, 2/R, ..., 1."""
    if precision.size == 0:
        return 0.0
    # running max from the right gives max precision at recall >= r
    env = np.maximum.accumulate(precision[::-1])[::-1]
    total = 0.0
    for r in np.arange(1, recall_points + 1) / recall_points:
        hit = np.flatnonzero(recall >= r - 1e-12)
        if hit.size:
            total += env[hit[0]]
    return total / recall_points


def average_precision(
    frames: Sequence[FrameDetections],
    class_id: int,
    iou_threshold: float,
    region: str = "all",
    recall_points: int = RECALL_POINTS,
) -> float | None:
    """AP of one class, or ``None`` when no ground truth of that class is present."""
    tp, _scores, num_gt = match_class(frames, class_id, iou_threshold, region)
    if num_gt == 0:
        return None
    precision, recall = precision_recall(tp, num_gt)
    return float(interpolated_ap(precision, recall, recall_points))


def mean_ap(per_class) -> float:
    vals = [v for v in (per_class.values() if isinstance(per_class, dict) else per_class) if v is not None]
    if not vals:
        raise EvalError("mAP over no classes")
    return float(np.mean(vals))


def counts(frames: Sequence[FrameDetections], class_id: int, iou_threshold: float, region: str = "all") -> dict:
    tp, _s, num_gt = match_class(frames, class_id, iou_threshold, region)
    ntp = int(tp.sum())
    return {"tp": ntp, "fp": int(tp.size - ntp), "fn": int(num_gt - ntp)}


def evaluate(frames: Sequence[FrameDetections], config: EvalConfig | None = None) -> dict:
    """Per-region, per-class AP / counts and mAP as a JSON-ready dict."""
    config = config or EvalConfig()
    out: dict = {}
    for region in config.regions:
        per_class: dict = {}
        cnt: dict = {}
        for cid, name in enumerate(CLASS_NAMES):
            thr = config.iou_thresholds[name]
            per_class[name] = average_precision(frames, cid, thr, region, config.recall_points)
            cnt[name] = counts(frames, cid, thr, region)
        present = [v for v in per_class.values() if v is not None]
        out[region] = {
            "ap": per_class,
            "mAP": float(np.mean(present)) if present else None,
            "counts": cnt,
        }
    return out
