"""Point-based encoder: four down-sampling + set-abstraction stages per branch."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from . import kernels
from .autodiff import Tensor


class BackboneError(ValueError):
    pass


@dataclass(frozen=True)
class StageConfig:
    num_keypoints: int
    ball_radius: float
    max_neighbors: int
    mlp_widths: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "mlp_widths", tuple(int(w) for w in self.mlp_widths))
        if self.num_keypoints <= 0 or self.max_neighbors <= 0:
            raise BackboneError("keypoint and neighbor counts must be positive")
        if self.ball_radius <= 0:
            raise BackboneError("ball radius must be positive")
        if not self.mlp_widths or min(self.mlp_widths) <= 0:
            raise BackboneError("MLP widths must be positive")

    @property
    def out_width(self) -> int:
        return self.mlp_widths[-1]


def default_stage_configs(
    keypoints: Sequence[int] = (256, 128, 64, 32),
    widths: Sequence[int] = (32, 64, 128, 256),
    radii: Sequence[float] = (0.8, 1.6, 3.2, 6.4),
    max_neighbors: int = 16,
) -> list[StageConfig]:
    return [
        StageConfig(m, r, max_neighbors, (max(1, n // 2), n))
        for m, n, r in zip(keypoints, widths, radii)
    ]


def validate_stages(configs: Sequence[StageConfig]) -> None:
    if len(configs) != 4:
        raise BackboneError(f"exactly four stages are required, got {len(configs)}")
    ms = [c.num_keypoints for c in configs]
    if any(a < b for a, b in zip(ms, ms[1:])):
        raise BackboneError(f"keypoint counts must be non-increasing, got {ms}")


@dataclass
class StageOutput:
    keypoints: np.ndarray  # M x 3
    features: Tensor  # M x N
    indices: np.ndarray  # rows of the stage input that became keypoints
    velocity: np.ndarray | None = None  # M x 2, radar branch only
    source: np.ndarray | None = field(default=None)  # indices into the raw cloud


def farthest_point_sample(points: np.ndarray, count: int, seed_index: int = 0) -> np.ndarray:
    """Greedy max-min subset of ``count`` rows starting at ``seed_index``."""
    pts = np.asarray(points, dtype=np.float64)
    if count > pts.shape[0]:
        raise BackboneError(f"cannot sample {count} of {pts.shape[0]} points")
    if count < 0:
        raise BackboneError("count must be non-negative")
    if count and not 0 <= seed_index < pts.shape[0]:
        raise BackboneError(f"seed index {seed_index} out of range")
    return kernels.farthest_point_sample(pts[:, :3], int(count), int(seed_index))


def ball_query(points: np.ndarray, center_indices: np.ndarray, radius: float, max_neighbors: int) -> np.ndarray:
    """Neighbor lists (``M x max_neighbors``) around keypoints that are rows of ``points``.

    The center comes first, then other in-radius rows in index order; short
    lists are padded with the center.
    """
    if radius <= 0:
        raise BackboneError("radius must be positive")
    return kernels.ball_query(np.asarray(points, dtype=np.float64)[:, :3], center_indices, float(radius), int(max_neighbors))


def init_stage_params(
    rng: np.random.Generator, in_features: int, config: StageConfig, prefix: str
) -> dict[str, Tensor]:
    params = {}
    fan_in = in_features + 3
    for j, width in enumerate(config.mlp_widths):
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, width))
        params[f"{prefix}.w{j}"] = Tensor(w, requires_grad=True, name=f"{prefix}.w{j}")
        params[f"{prefix}.b{j}"] = Tensor(np.zeros((1, width)), requires_grad=True, name=f"{prefix}.b{j}")
        fan_in = width
    return params


def init_backbone_params(
    rng: np.random.Generator, in_features: int, configs: Sequence[StageConfig], prefix: str
) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    width = in_features
    for i, cfg in enumerate(configs):
        params.update(init_stage_params(rng, width, cfg, f"{prefix}.sa{i}"))
        width = cfg.out_width
    return params


def set_abstraction(
    points: np.ndarray,
    features: Tensor | None,
    config: StageConfig,
    params: dict[str, Tensor],
    prefix: str,
    seed_index: int = 0,
    velocity: np.ndarray | None = None,
) -> StageOutput:
    """Sample keypoints, group neighbors, run the shared MLP and max-pool.

    Neighbor offsets are expressed relative to the keypoint and divided by the
    ball radius before being concatenated with the neighbor features.
    """
    xyz = np.asarray(points, dtype=np.float64)[:, :3]
    idx = farthest_point_sample(xyz, config.num_keypoints, seed_index)
    nbr = ball_query(xyz, idx, config.ball_radius, config.max_neighbors)
    m, k = nbr.shape
    rel = (xyz[nbr] - xyz[idx][:, None, :]) / config.ball_radius
    x = Tensor(rel.reshape(m * k, 3))
    if features is not None:
        if features.shape[0] != xyz.shape[0]:
            raise BackboneError(
                f"{prefix}: {features.shape[0]} feature rows for {xyz.shape[0]} points"
            )
        x = ad.concat([x, ad.gather(features, nbr.reshape(-1), axis=0)], axis=1)
    j = 0
    while f"{prefix}.w{j}" in params:
        w = params[f"{prefix}.w{j}"]
        if w.shape[0] != x.shape[1]:
            raise BackboneError(f"{prefix}.w{j} expects {w.shape[0]} inputs, got {x.shape[1]}")
        x = ad.relu(x @ w + params[f"{prefix}.b{j}"])
        j += 1
    if j == 0:
        raise BackboneError(f"no parameters found for stage {prefix}")
    pooled = ad.max_over_set(ad.reshape(x, (m, k, x.shape[1])), axis=1)
    vel = None if velocity is None else np.asarray(velocity, dtype=np.float64)[idx]
    return StageOutput(keypoints=xyz[idx].copy(), features=pooled, indices=idx, velocity=vel)


StageHook = Callable[[int, StageOutput], StageOutput]


def encode_cloud(
    points: np.ndarray,
    features: Tensor | np.ndarray | None,
    configs: Sequence[StageConfig],
    params: dict[str, Tensor],
    prefix: str,
    velocity: np.ndarray | None = None,
    seed_index: int = 0,
    stage_hook: StageHook | None = None,
) -> list[StageOutput]:
    """Run the four stages back to back.

    ``velocity`` (radar only) rides along with the sampled keypoints.
    ``stage_hook(i, out)`` may replace a stage output before it feeds the next
    stage; the motion-aware encoder plugs in there. Later stages always seed
    sampling at their first input row, which is the previous stage's first
    keypoint.
    """
    validate_stages(configs)
    xyz = np.asarray(points, dtype=np.float64)
    if xyz.shape[0] < configs[0].num_keypoints:
        raise BackboneError(
            f"cloud has {xyz.shape[0]} points, first stage needs {configs[0].num_keypoints}"
        )
    feats = features if features is None or isinstance(features, Tensor) else Tensor(features)
    source = np.arange(xyz.shape[0])
    outputs = []
    for i, cfg in enumerate(configs):
        out = set_abstraction(
            xyz, feats, cfg, params, f"{prefix}.sa{i}", seed_index if i == 0 else 0, velocity
        )
        out.source = source[out.indices]
        if stage_hook is not None:
            out = stage_hook(i, out)
        outputs.append(out)
        xyz, feats, velocity, source = out.keypoints, out.features, out.velocity, out.source
    return outputs
