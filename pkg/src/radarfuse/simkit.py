"""Seeded synthetic scenes with paired LiDAR and 4D-radar clouds.

Sensors sit at the origin looking along +x; the ground is the plane z = 0.
LiDAR returns lie on the sensor-facing faces of each box plus a sparse
ground plane. Radar returns are sparse, carry Doppler velocities, and
reproduce two failure modes of real radar:

* dropout: returns inside moving objects that report zero velocity;
* ghosts: returns outside every object that report a nonzero velocity.

Both rates are fractions of the final radar cloud, so a velocity-threshold
motion classifier misclassifies exactly those points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .geom3d import Box7, bev_intersection, in_corridor, points_in_box
from .heads import ANCHORS, CLASS_NAMES, class_index

# radar point provenance codes
KIND_OBJECT, KIND_BACKGROUND, KIND_GHOST, KIND_DROPOUT = 0, 1, 2, 3
_FACE_INSET = 1.0 - 1e-9  # keeps face samples inside the inclusive box test after rounding


class SimulationError(RuntimeError):
    pass


class PlacementError(SimulationError):
    pass


@dataclass(frozen=True)
class ObjectSpec:
    class_id: int
    box: Box7
    moving: bool
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        speed = math.sqrt(sum(v * v for v in self.velocity))
        if self.moving != (speed > 0):
            raise SimulationError(f"moving={self.moving} but |velocity|={speed}")

    @property
    def class_name(self) -> str:
        return CLASS_NAMES[self.class_id]


@dataclass(frozen=True)
class SensorModel:
    lidar_density: float = 10.0  # points per m^2 of visible box surface
    lidar_ground_density: float = 0.15  # points per m^2 of ground
    lidar_noise: float = 0.02  # meters
    lidar_height: float = 1.8  # LiDAR origin above ground, for face visibility
    radar_points_per_object: tuple[float, float, float] = (9.0, 5.0, 6.0)
    radar_background_points: float = 10.0
    ghost_rate: float = 0.10
    dropout_rate: float = 0.15
    ego_velocity: tuple[float, float] = (3.0, 0.0)

    def __post_init__(self):
        for name in ("ghost_rate", "dropout_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SimulationError(f"{name} must be in [0, 1], got {v}")
        if self.ghost_rate + self.dropout_rate >= 1.0:
            raise SimulationError("ghost and dropout rates must sum to less than 1")
        if self.lidar_density < 0 or self.lidar_ground_density < 0 or self.radar_background_points < 0:
            raise SimulationError("densities must be non-negative")
        if self.lidar_noise < 0:
            raise SimulationError("noise must be non-negative")


@dataclass(frozen=True)
class SceneConfig:
    x_range: tuple[float, float] = (0.0, 50.0)
    y_range: tuple[float, float] = (-25.0, 25.0)
    min_objects: int = 3
    max_objects: int = 8
    class_probs: tuple[float, float, float] = (0.5, 0.25, 0.25)
    moving_probs: tuple[float, float, float] = (0.5, 0.6, 0.6)
    speed_ranges: tuple[tuple[float, float], ...] = ((3.0, 12.0), (0.8, 2.0), (2.0, 6.0))
    size_jitter: float = 0.1
    corridor_bias: float = 0.25
    min_range: float = 3.0
    iou_cap: float = 0.0
    max_retries: int = 200
    sensor: SensorModel = field(default_factory=SensorModel)

    def __post_init__(self):
        if self.min_objects < 0 or self.max_objects < self.min_objects:
            raise SimulationError("object count range is invalid")
        if abs(sum(self.class_probs) - 1.0) > 1e-9:
            raise SimulationError("class probabilities must sum to 1")


@dataclass
class SceneFrame:
    frame_id: int
    objects: list[ObjectSpec]
    lidar: np.ndarray  # N x 4: x, y, z, intensity
    radar: np.ndarray  # K x 6: x, y, z, v_rel, v_abs, rcs
    radar_kind: np.ndarray | None = None  # provenance codes, simulator only
    seed: int | None = None

    @property
    def boxes(self) -> np.ndarray:
        if not self.objects:
            return np.zeros((0, 7))
        return np.stack([o.box.as_array() for o in self.objects])

    @property
    def class_ids(self) -> np.ndarray:
        return np.array([o.class_id for o in self.objects], dtype=np.int64)

    @property
    def moving(self) -> np.ndarray:
        return np.array([o.moving for o in self.objects], dtype=bool)

    @property
    def region_tags(self) -> list[str]:
        return ["corridor" if in_corridor(o.box) else "outside" for o in self.objects]


def derive_seed(base_seed: int, index: int) -> int:
    """Independent per-frame seed from a base seed and a frame counter."""
    return int(np.random.SeedSequence([int(base_seed), int(index)]).generate_state(1, np.uint64)[0])


def doppler(point_pos, object_velocity, ego_velocity, origin=(0.0, 0.0, 0.0)) -> tuple[float, float]:
    """Radial speeds at ``point_pos``: relative to the moving sensor, and ego-compensated (absolute)."""
    p = np.asarray(point_pos, dtype=np.float64) - np.asarray(origin, dtype=np.float64)
    rng_ = float(np.linalg.norm(p))
    if rng_ == 0.0:
        raise SimulationError("Doppler undefined for a point at the sensor origin")
    u = p / rng_
    ov = np.zeros(3)
    ov[: len(object_velocity)] = object_velocity
    ev = np.zeros(3)
    ev[: len(ego_velocity)] = ego_velocity
    return float(np.dot(ov - ev, u)), float(abs(np.dot(ov, u)))


def _doppler_many(points: np.ndarray, object_velocity: np.ndarray, ego_velocity: np.ndarray):
    p = np.asarray(points, dtype=np.float64)[:, :3]
    r = np.linalg.norm(p, axis=1)
    if np.any(r == 0.0):
        raise SimulationError("Doppler undefined for a point at the sensor origin")
    u = p / r[:, None]
    ov = np.broadcast_to(np.asarray(object_velocity, dtype=np.float64), p.shape)
    ev = np.zeros(3)
    ev[: len(ego_velocity)] = ego_velocity
    return np.sum((ov - ev) * u, axis=1), np.abs(np.sum(ov * u, axis=1))


def _place_objects(rng: np.random.Generator, cfg: SceneConfig) -> list[ObjectSpec]:
    n = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))
    objects: list[ObjectSpec] = []
    x0, x1 = cfg.x_range
    y0, y1 = cfg.y_range
    for _ in range(n):
        cls = int(rng.choice(len(CLASS_NAMES), p=cfg.class_probs))
        moving = bool(rng.random() < cfg.moving_probs[cls])
        size = ANCHORS[cls] * (1.0 + cfg.size_jitter * rng.uniform(-1.0, 1.0, size=3))
        lo, hi = cfg.speed_ranges[cls]
        speed = float(rng.uniform(lo, hi)) if moving else 0.0
        for _attempt in range(cfg.max_retries):
            theta = float(rng.uniform(-math.pi, math.pi))
            margin = 0.5 * float(np.hypot(size[0], size[1]))
            if rng.random() < cfg.corridor_bias:
                x = float(rng.uniform(max(x0 + margin, cfg.min_range), 25.0 - margin))
                y = float(rng.uniform(-3.5, 3.5))
            else:
                x = float(rng.uniform(x0 + margin, x1 - margin))
                y = float(rng.uniform(y0 + margin, y1 - margin))
            if math.hypot(x, y) < cfg.min_range + margin:
                continue
            box = Box7(x, y, 0.5 * size[2], size[0], size[1], size[2], theta)
            if all(_overlap_ok(box, o.box, cfg.iou_cap) for o in objects):
                vel = (speed * math.cos(theta), speed * math.sin(theta), 0.0)
                objects.append(ObjectSpec(cls, box, moving, vel))
                break
        else:
            raise PlacementError(f"could not place object {len(objects)} after {cfg.max_retries} tries")
    return objects


def _overlap_ok(a: Box7, b: Box7, cap: float) -> bool:
    inter = bev_intersection(a, b)
    if cap <= 0.0:
        return inter <= 0.0
    return inter / (a.bev_area + b.bev_area - inter) <= cap


def _box_faces(box: Box7):
    """(local normal axis, sign, area) for the five non-bottom faces."""
    l, w, h = box.l, box.w, box.h
    return [
        (0, 1.0, w * h),
        (0, -1.0, w * h),
        (1, 1.0, l * h),
        (1, -1.0, l * h),
        (2, 1.0, l * w),
    ]


def _local_to_world(local: np.ndarray, box: Box7) -> np.ndarray:
    c, s = math.cos(box.theta), math.sin(box.theta)
    out = np.empty_like(local)
    out[:, 0] = box.x + c * local[:, 0] - s * local[:, 1]
    out[:, 1] = box.y + s * local[:, 0] + c * local[:, 1]
    out[:, 2] = box.z + local[:, 2]
    return out


def _sample_surface(rng: np.random.Generator, box: Box7, density: float, viewpoint: np.ndarray) -> np.ndarray:
    half = np.array([box.l, box.w, box.h]) * 0.5
    chunks = []
    for axis, sign, area in _box_faces(box):
        normal_local = np.zeros(3)
        normal_local[axis] = sign
        center_local = normal_local * half
        center = _local_to_world(center_local[None, :], box)[0]
        normal = _local_to_world(normal_local[None, :], box)[0] - np.array([box.x, box.y, box.z])
        if np.dot(normal, center - viewpoint) >= 0.0:
            continue  # back face
        count = int(rng.poisson(density * area))
        if count == 0:
            continue
        local = rng.uniform(-1.0, 1.0, size=(count, 3)) * half
        local[:, axis] = sign * half[axis] * _FACE_INSET
        chunks.append(_local_to_world(local, box))
    if not chunks:
        return np.zeros((0, 3))
    return np.vstack(chunks)


def _outside_all(points: np.ndarray, objects: Sequence[ObjectSpec]) -> np.ndarray:
    keep = np.ones(points.shape[0], dtype=bool)
    for o in objects:
        keep &= ~points_in_box(points, o.box)
    return keep


def sample_lidar(
    objects: Sequence[ObjectSpec], cfg: SceneConfig, rng: np.random.Generator
) -> np.ndarray:
    """LiDAR cloud ``N x 4`` (x, y, z, intensity)."""
    sensor = cfg.sensor
    view = np.array([0.0, 0.0, sensor.lidar_height])
    parts = []
    for o in objects:
        pts = _sample_surface(rng, o.box, sensor.lidar_density, view)
        if pts.shape[0]:
            if sensor.lidar_noise > 0:
                pts = pts + rng.normal(0.0, sensor.lidar_noise, size=pts.shape)
            inten = rng.uniform(0.3, 1.0, size=(pts.shape[0], 1))
            parts.append(np.hstack([pts, inten]))
    area = (cfg.x_range[1] - cfg.x_range[0]) * (cfg.y_range[1] - cfg.y_range[0])
    n_ground = int(rng.poisson(sensor.lidar_ground_density * area))
    if n_ground:
        g = np.column_stack(
            [
                rng.uniform(*cfg.x_range, size=n_ground),
                rng.uniform(*cfg.y_range, size=n_ground),
                np.zeros(n_ground),
            ]
        )
        g = g[_outside_all(g, objects)]
        if sensor.lidar_noise > 0:
            g[:, 2] += rng.normal(0.0, sensor.lidar_noise, size=g.shape[0])
        parts.append(np.hstack([g, rng.uniform(0.0, 0.2, size=(g.shape[0], 1))]))
    if not parts:
        return np.zeros((0, 4))
    return np.vstack(parts)


def _random_outside(rng, n, objects, cfg, z_max=2.5):
    out = np.zeros((0, 3))
    while out.shape[0] < n:
        need = n - out.shape[0]
        cand = np.column_stack(
            [
                rng.uniform(max(cfg.x_range[0], 1.0), cfg.x_range[1], size=2 * need),
                rng.uniform(*cfg.y_range, size=2 * need),
                rng.uniform(0.0, z_max, size=2 * need),
            ]
        )
        cand = cand[_outside_all(cand, objects)]
        out = np.vstack([out, cand[:need]])
    return out


def sample_radar(
    objects: Sequence[ObjectSpec], cfg: SceneConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Radar cloud ``K x 6`` (x, y, z, v_rel, v_abs, rcs) and provenance codes."""
    sensor = cfg.sensor
    ego = np.asarray(sensor.ego_velocity, dtype=np.float64)
    pos, vel, kind, moving_rows = [], [], [], []
    count = 0
    for o in objects:
        n = int(rng.poisson(sensor.radar_points_per_object[o.class_id]))
        if n == 0:
            continue
        half = 0.5 * np.array([o.box.l, o.box.w, o.box.h]) * 0.95
        p = _local_to_world(rng.uniform(-1.0, 1.0, size=(n, 3)) * half, o.box)
        v_rel, v_abs = _doppler_many(p, np.asarray(o.velocity), ego)
        pos.append(p)
        vel.append(np.column_stack([v_rel, v_abs]))
        kind.append(np.full(n, KIND_OBJECT))
        if o.moving:
            moving_rows.extend(range(count, count + n))
        count += n
    n_bg = int(rng.poisson(sensor.radar_background_points))
    if n_bg:
        p = _random_outside(rng, n_bg, objects, cfg)
        v_rel, v_abs = _doppler_many(p, np.zeros(3), ego)
        pos.append(p)
        vel.append(np.column_stack([v_rel, np.zeros(n_bg)]))
        kind.append(np.full(n_bg, KIND_BACKGROUND))
        count += n_bg
    regular = count
    n_ghost = int(round(sensor.ghost_rate * regular / (1.0 - sensor.ghost_rate))) if regular else 0
    if n_ghost:
        p = _random_outside(rng, n_ghost, objects, cfg)
        radial = rng.uniform(0.5, 8.0, size=n_ghost) * rng.choice([-1.0, 1.0], size=n_ghost)
        u = p / np.linalg.norm(p, axis=1, keepdims=True)
        ego_radial = u[:, : ego.shape[0]] @ ego
        pos.append(p)
        vel.append(np.column_stack([radial - ego_radial, np.abs(radial)]))
        kind.append(np.full(n_ghost, KIND_GHOST))
    if not pos:
        return np.zeros((0, 6)), np.zeros(0, dtype=np.int64)
    xyz = np.vstack(pos)
    v = np.vstack(vel)
    kinds = np.concatenate(kind).astype(np.int64)
    total = xyz.shape[0]
    n_drop = min(int(round(sensor.dropout_rate * total)), len(moving_rows))
    if n_drop:
        rows = rng.choice(np.array(moving_rows), size=n_drop, replace=False)
        u = xyz[rows] / np.linalg.norm(xyz[rows], axis=1, keepdims=True)
        v[rows, 0] = -(u[:, : ego.shape[0]] @ ego)
        v[rows, 1] = 0.0
        kinds[rows] = KIND_DROPOUT
    rcs = rng.uniform(-5.0, 15.0, size=(total, 1))
    cloud = np.hstack([xyz, v, rcs])
    order = rng.permutation(total)
    return cloud[order], kinds[order]


def gen_scene(seed: int, cfg: SceneConfig | None = None, frame_id: int = 0) -> SceneFrame:
    """One synthetic frame, fully determined by ``seed`` and ``cfg``."""
    cfg = cfg or SceneConfig()
    rng = np.random.default_rng(int(seed))
    objects = _place_objects(rng, cfg)
    lidar = sample_lidar(objects, cfg, rng)
    radar, kinds = sample_radar(objects, cfg, rng)
    return SceneFrame(frame_id=frame_id, objects=objects, lidar=lidar, radar=radar, radar_kind=kinds, seed=int(seed))


def gen_dataset(base_seed: int, count: int, cfg: SceneConfig | None = None, start: int = 0) -> list[SceneFrame]:
    return [gen_scene(derive_seed(base_seed, i), cfg, frame_id=i) for i in range(start, start + count)]


def with_pathologies(cfg: SceneConfig, ghost_rate: float, dropout_rate: float) -> SceneConfig:
    return replace(cfg, sensor=replace(cfg.sensor, ghost_rate=ghost_rate, dropout_rate=dropout_rate))


def objects_from_annotations(boxes: np.ndarray, class_ids: Sequence[int], moving: Sequence[bool]) -> list[ObjectSpec]:
    """Rebuild object specs from label data (velocity is not stored; moving objects get a unit placeholder)."""
    out = []
    for b, c, mv in zip(np.asarray(boxes).reshape(-1, 7), class_ids, moving):
        box = Box7.from_array(b)
        vel = (math.cos(box.theta), math.sin(box.theta), 0.0) if mv else (0.0, 0.0, 0.0)
        out.append(ObjectSpec(int(c), box, bool(mv), vel))
    return out


__all__ = [
    "KIND_BACKGROUND",
    "KIND_DROPOUT",
    "KIND_GHOST",
    "KIND_OBJECT",
    "ObjectSpec",
    "PlacementError",
    "SceneConfig",
    "SceneFrame",
    "SensorModel",
    "SimulationError",
    "class_index",
    "derive_seed",
    "doppler",
    "gen_dataset",
    "gen_scene",
    "sample_lidar",
    "sample_radar",
    "with_pathologies",
]
