"""Motion-aware encoding of radar keypoint features.

Per radar stage, keypoint features ``f`` (``M x N``) attend to each other;
the attention weights mix an encoding of the keypoints' measured velocities
``v`` (``M x 2``: relative radial, absolute) and the result is added back to
``f``. A small per-point head turns the enhanced features into a motion
probability, which is supervised with a focal-style loss and averaged over
the four stages.

The attention is over rows (keypoints): ``A = softmax(f f^T / sqrt(N))``,
``H = A @ Encode(v) + f``, ``y_hat = sigmoid(MLP(H))``.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .geom3d import points_in_box

PROB_EPS = 1e-7
DEFAULT_ALPHA = 0.25
DEFAULT_GAMMA = 2.0


class MotionError(ValueError):
    pass


def init_dmae_params(rng: np.random.Generator, width: int, prefix: str) -> dict[str, Tensor]:
    half = max(1, width // 2)
    shapes = {
        "enc.w0": (2, half),
        "enc.b0": (1, half),
        "enc.w1": (half, width),
        "enc.b1": (1, width),
        "head.w0": (width, half),
        "head.b0": (1, half),
        "head.w1": (half, 1),
        "head.b1": (1, 1),
    }
    params = {}
    for key, shape in shapes.items():
        if ".b" in key:
            arr = np.zeros(shape)
        else:
            arr = rng.normal(0.0, math.sqrt(2.0 / shape[0]), size=shape)
            if key == "head.w1":
                arr *= 0.1  # start near p = 0.5 so the clamp is inactive early on
        params[f"{prefix}.{key}"] = Tensor(arr, requires_grad=True, name=f"{prefix}.{key}")
    return params


def encode_velocity(v, params: dict[str, Tensor], prefix: str) -> Tensor:
    """Row-wise MLP ``2 -> N/2 -> N`` with a ReLU in between."""
    v = ad.as_tensor(v)
    if v.ndim != 2 or v.shape[1] != 2:
        raise MotionError(f"velocity must be M x 2, got {v.shape}")
    h = ad.relu(v @ params[f"{prefix}.enc.w0"] + params[f"{prefix}.enc.b0"])
    return h @ params[f"{prefix}.enc.w1"] + params[f"{prefix}.enc.b1"]


def dmae_forward(f: Tensor, v, params: dict[str, Tensor], prefix: str) -> tuple[Tensor, Tensor]:
    """Return the enhanced features ``H`` (``M x N``) and motion probabilities (``M``)."""
    f = ad.as_tensor(f)
    v = ad.as_tensor(v)
    if f.ndim != 2 or v.shape[0] != f.shape[0]:
        raise MotionError(f"feature rows {f.shape} and velocity rows {v.shape} disagree")
    width = f.shape[1]
    enc = encode_velocity(v, params, prefix)
    if enc.shape[1] != width:
        raise MotionError(f"velocity encoding width {enc.shape[1]} != feature width {width}")
    attn = ad.softmax(f @ ad.transpose(f), temperature=math.sqrt(width))
    h = attn @ enc + f
    hidden = ad.relu(h @ params[f"{prefix}.head.w0"] + params[f"{prefix}.head.b0"])
    logits = hidden @ params[f"{prefix}.head.w1"] + params[f"{prefix}.head.b1"]
    y_hat = ad.clip(ad.sigmoid(ad.reshape(logits, (f.shape[0],))), PROB_EPS, 1.0 - PROB_EPS)
    return h, y_hat


def label_point_motion(points: np.ndarray, boxes: np.ndarray, moving: Sequence[bool]) -> np.ndarray:
    """1 for points in a moving box, 0 in a static box or the background.

    A point inside several boxes takes the label of the nearest center.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))[:, :3]
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 7)
    moving = np.asarray(moving, dtype=bool)
    labels = np.zeros(pts.shape[0], dtype=np.int64)
    if boxes.shape[0] == 0 or pts.shape[0] == 0:
        return labels
    inside = np.stack([points_in_box(pts, b) for b in boxes], axis=1)
    dist = np.linalg.norm(pts[:, None, :] - boxes[None, :, :3], axis=-1)
    dist = np.where(inside, dist, np.inf)
    owner = np.argmin(dist, axis=1)
    hit = inside.any(axis=1)
    labels[hit] = moving[owner[hit]].astype(np.int64)
    return labels


def focal_terms(p: Tensor, y: np.ndarray, alpha: float, gamma: float) -> Tensor:
    """Per-entry ``-[a y (1-p)^g log p + (1-a)(1-y) p^g log(1-p)]``; ``p`` is clamped first."""
    y = np.asarray(y, dtype=np.float64)
    p = ad.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    q = 1.0 - p
    pos = alpha * y * ad.power(q, gamma) * ad.log(p)
    negt = (1.0 - alpha) * (1.0 - y) * ad.power(p, gamma) * ad.log(q)
    return -(pos + negt)


def motion_loss_layer(y_hat, y, alpha: float = DEFAULT_ALPHA, gamma: float = DEFAULT_GAMMA) -> Tensor:
    y_hat = ad.as_tensor(y_hat)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y_hat.shape != y.shape:
        raise MotionError(f"{y_hat.shape[0] if y_hat.ndim else 1} predictions for {y.shape[0]} labels")
    if not 0.0 < alpha < 1.0:
        raise MotionError("alpha must lie in (0, 1)")
    if gamma < 0:
        raise MotionError("gamma must be non-negative")
    if y.size == 0:
        raise MotionError("motion loss over zero points")
    return ad.reduce_mean(focal_terms(y_hat, y, alpha, gamma))


def motion_loss_total(layer_losses: Sequence) -> Tensor:
    if len(layer_losses) != 4:
        raise MotionError(f"expected 4 layer losses, got {len(layer_losses)}")
    total = ad.as_tensor(layer_losses[0])
    for term in layer_losses[1:]:
        total = total + term
    return total * 0.25


def threshold_baseline(velocity: np.ndarray, threshold: float = 0.0) -> np.ndarray:
    """Naive per-point rule: moving iff absolute radial speed exceeds ``threshold``."""
    v = np.asarray(velocity, dtype=np.float64).reshape(-1, 2)
    return (np.abs(v[:, 1]) > threshold).astype(np.int64)
