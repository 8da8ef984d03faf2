"""Cross-modal uncertainty alignment.

LiDAR boxes ``D_L`` (``m x 7``) and radar boxes ``D_R`` (``n x 7``) are paired
one-to-one by minimum total center distance, ``k = min(m, n)`` pairs. The
per-attribute absolute disagreement of each pair (``k x 7``) acts as an
uncertainty: it down-weights the LiDAR loss through ``exp(-dD)`` and is
itself penalised by ``lam * dD``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels
from .autodiff import Tensor
from .geom3d import center_distance_matrix, wrap_angles

DEFAULT_LAMBDA = 0.1


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class MatchResult:
    pairs: np.ndarray  # k x 2, (lidar index, radar index), sorted by lidar index
    total_cost: float

    @property
    def k(self) -> int:
        return int(self.pairs.shape[0])

    @property
    def lidar(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def radar(self) -> np.ndarray:
        return self.pairs[:, 1]


def hungarian(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost assignment of size ``min(m, n)``; returns ``k x 2`` (row, col).

    Rectangular inputs are padded to square with a constant sentinel larger
    than every real cost; pairs touching padding are dropped.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise AlignmentError(f"cost must be a matrix, got shape {c.shape}")
    m, n = c.shape
    if m == 0 or n == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if not np.all(np.isfinite(c)):
        raise AlignmentError("cost matrix has non-finite entries")
    if np.any(c < 0):
        raise AlignmentError("cost matrix has negative entries")
    size = max(m, n)
    if m != n:
        sentinel = float(c.max()) + 1.0
        padded = np.full((size, size), sentinel)
        padded[:m, :n] = c
    else:
        padded = c
    assign = kernels.hungarian_square(padded)
    rows = np.arange(size)
    keep = (rows < m) & (assign < n)
    return np.stack([rows[keep], assign[keep]], axis=1).astype(np.int64)


def assignment_cost(cost: np.ndarray, pairs: np.ndarray) -> float:
    c = np.asarray(cost, dtype=np.float64)
    return math.fsum(c[i, j] for i, j in pairs)


def match_boxes(d_lidar: np.ndarray, d_radar: np.ndarray, gate: float | None = None) -> MatchResult:
    """Pair boxes by center distance. ``gate`` (meters) optionally drops far pairs."""
    dl = np.asarray(d_lidar, dtype=np.float64).reshape(-1, 7)
    dr = np.asarray(d_radar, dtype=np.float64).reshape(-1, 7)
    if dl.shape[0] == 0 or dr.shape[0] == 0:
        return MatchResult(np.zeros((0, 2), dtype=np.int64), 0.0)
    cost = center_distance_matrix(dl, dr)
    pairs = hungarian(cost)
    if gate is not None:
        pairs = pairs[cost[pairs[:, 0], pairs[:, 1]] <= gate]
    return MatchResult(pairs, assignment_cost(cost, pairs))


def delta_d(lidar_aligned, radar_aligned) -> Tensor:
    """``k x 7`` absolute per-attribute disagreement; heading uses the wrapped difference."""
    a = ad.as_tensor(lidar_aligned)
    b = ad.as_tensor(radar_aligned)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 7:
        raise AlignmentError(f"aligned sets must both be k x 7, got {a.shape} and {b.shape}")
    diff = a - b
    shift = np.zeros(diff.shape)
    raw_theta = diff.data[:, 6]
    shift[:, 6] = wrap_angles(raw_theta) - raw_theta
    return ad.absolute(diff + shift)


def uncertainty_loss(per_pair_loss, delta, lam: float = DEFAULT_LAMBDA) -> Tensor:
    """Mean over pairs and attributes of ``loss * exp(-dD) + lam * dD``."""
    loss = ad.as_tensor(per_pair_loss)
    delta = ad.as_tensor(delta)
    if loss.shape != delta.shape:
        raise AlignmentError(f"loss {loss.shape} and disagreement {delta.shape} must match")
    if lam < 0:
        raise AlignmentError("lambda must be non-negative")
    return ad.reduce_mean(loss * ad.exp(-delta) + lam * delta)


def aligned_lidar_loss(
    reg_components: Tensor | None,
    cls_terms: Tensor,
    fg_index: np.ndarray,
    pairs: np.ndarray,
    delta: Tensor | None,
    lam: float = DEFAULT_LAMBDA,
) -> Tensor:
    """LiDAR detection loss with the alignment weighting folded in.

    ``reg_components`` is ``F x 7`` over the foreground keypoints listed in
    ``fg_index``; ``pairs[:, 0]`` indexes those foreground rows. Matched rows
    have their regression terms scaled by ``exp(-dD)`` attribute-wise and
    their classification term by the row mean of ``exp(-dD)``; every other
    keypoint keeps its plain loss. With ``dD = 0`` this equals
    ``reg_loss + cls_loss``.
    """
    m = cls_terms.shape[0]
    if reg_components is None or delta is None or pairs.shape[0] == 0:
        cls = ad.reduce_mean(cls_terms)
        if reg_components is None:
            return cls
        return ad.reduce_sum(reg_components) * (1.0 / reg_components.shape[0]) + cls
    f = reg_components.shape[0]
    matched = pairs[:, 0]
    if delta.shape != (matched.shape[0], 7):
        raise AlignmentError(f"disagreement shape {delta.shape} does not fit {matched.shape[0]} pairs")
    weight = ad.exp(-delta)
    rest = np.setdiff1d(np.arange(f), matched)
    reg = ad.reduce_sum(ad.gather(reg_components, matched, axis=0) * weight)
    if rest.size:
        reg = reg + ad.reduce_sum(ad.gather(reg_components, rest, axis=0))
    kp_matched = fg_index[matched]
    kp_rest = np.setdiff1d(np.arange(m), kp_matched)
    cls = ad.reduce_sum(ad.gather(cls_terms, kp_matched, axis=0) * ad.reduce_mean(weight, axis=1))
    if kp_rest.size:
        cls = cls + ad.reduce_sum(ad.gather(cls_terms, kp_rest, axis=0))
    return reg * (1.0 / f) + cls * (1.0 / m) + lam * ad.reduce_mean(delta)
