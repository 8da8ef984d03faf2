"""Run configuration: nested dataclasses <-> INI-style text with sections."""
from __future__ import annotations

import configparser
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from ..backbone import BackboneError, StageConfig, default_stage_configs, validate_stages
from ..dmae import DEFAULT_ALPHA, DEFAULT_GAMMA
from ..evalkit.metrics import DEFAULT_IOU_THRESHOLDS, EvalConfig
from ..simkit import SceneConfig, SensorModel
from ..xua import DEFAULT_LAMBDA


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataSection:
    frames: int = 500
    train_frames: int = 400
    sim_seed: int = 7
    path: str = ""  # directory written by ``simulate``; empty means simulate in memory
    ghost_rate: float = 0.10
    dropout_rate: float = 0.15
    ego_speed: float = 3.0
    min_objects: int = 3
    max_objects: int = 8
    lidar_density: float = 10.0


@dataclass(frozen=True)
class ModelSection:
    lidar_keypoints: tuple[int, ...] = (256, 128, 64, 32)
    lidar_widths: tuple[int, ...] = (32, 64, 128, 256)
    lidar_radii: tuple[float, ...] = (0.8, 1.6, 3.2, 6.4)
    radar_keypoints: tuple[int, ...] = (128, 64, 32, 16)
    radar_widths: tuple[int, ...] = (32, 64, 128, 256)
    radar_radii: tuple[float, ...] = (2.5, 4.0, 8.0, 16.0)
    max_neighbors: int = 16
    head_hidden: int = 64
    fusion_width: int = 32
    fusion_radius: float = 6.0
    ground_clip: float = 0.2
    random_fps_seed: bool = False


@dataclass(frozen=True)
class DmaeSection:
    enabled: bool = True
    alpha: float = DEFAULT_ALPHA
    gamma: float = DEFAULT_GAMMA


@dataclass(frozen=True)
class XuaSection:
    enabled: bool = True
    lam: float = DEFAULT_LAMBDA
    gate: float = 0.0  # meters; 0 disables gating


@dataclass(frozen=True)
class OptimSection:
    lr: float = 2e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    epochs: int = 40


@dataclass(frozen=True)
class LossSection:
    lidar_weight: float = 1.0
    radar_weight: float = 1.0
    motion_weight: float = 1.0


@dataclass(frozen=True)
class EvalSection:
    objectness_threshold: float = 0.3
    nms_threshold: float = 0.5
    car_iou: float = DEFAULT_IOU_THRESHOLDS["Car"]
    pedestrian_iou: float = DEFAULT_IOU_THRESHOLDS["Pedestrian"]
    cyclist_iou: float = DEFAULT_IOU_THRESHOLDS["Cyclist"]


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    dmae: DmaeSection = field(default_factory=DmaeSection)
    xua: XuaSection = field(default_factory=XuaSection)
    optim: OptimSection = field(default_factory=OptimSection)
    loss: LossSection = field(default_factory=LossSection)
    eval: EvalSection = field(default_factory=EvalSection)

    # -- derived views ---------------------------------------------------
    def lidar_stages(self) -> list[StageConfig]:
        m = self.model
        return default_stage_configs(m.lidar_keypoints, m.lidar_widths, m.lidar_radii, m.max_neighbors)

    def radar_stages(self) -> list[StageConfig]:
        m = self.model
        return default_stage_configs(m.radar_keypoints, m.radar_widths, m.radar_radii, m.max_neighbors)

    def scene_config(self) -> SceneConfig:
        d = self.data
        sensor = SensorModel(
            lidar_density=d.lidar_density,
            ghost_rate=d.ghost_rate,
            dropout_rate=d.dropout_rate,
            ego_velocity=(d.ego_speed, 0.0),
        )
        return SceneConfig(min_objects=d.min_objects, max_objects=d.max_objects, sensor=sensor)

    def eval_config(self) -> EvalConfig:
        e = self.eval
        return EvalConfig(
            iou_thresholds={"Car": e.car_iou, "Pedestrian": e.pedestrian_iou, "Cyclist": e.cyclist_iou}
        )

    def validate(self) -> "RunConfig":
        try:
            for stages in (self.lidar_stages(), self.radar_stages()):
                validate_stages(stages)
            m = self.model
            for name in ("lidar_keypoints", "lidar_widths", "lidar_radii", "radar_keypoints", "radar_widths", "radar_radii"):
                if len(getattr(m, name)) != 4:
                    raise ConfigError(f"model.{name} needs 4 entries")
            if m.lidar_widths[-1] <= 0 or m.fusion_width <= 0 or m.head_hidden <= 0:
                raise ConfigError("widths must be positive")
            self.scene_config()
            self.eval_config()
        except (BackboneError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
        d = self.data
        if not 0 < d.train_frames < d.frames:
            raise ConfigError(f"data.train_frames must be in (0, frames={d.frames}), got {d.train_frames}")
        if not 0.0 < self.dmae.alpha < 1.0 or self.dmae.gamma < 0:
            raise ConfigError("dmae.alpha must be in (0,1) and gamma >= 0")
        if self.xua.lam < 0:
            raise ConfigError("xua.lam must be non-negative")
        if self.optim.epochs < 0 or self.optim.lr <= 0:
            raise ConfigError("optim.epochs must be >= 0 and lr > 0")
        return self

    # -- identity ----------------------------------------------------------
    def to_dict(self) -> dict:
        return asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


_SECTIONS = ("data", "model", "dmae", "xua", "optim", "loss", "eval")


def _parse_value(raw: str, default: Any, where: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            elem = type(default[0]) if default else float
            return tuple(elem(v) for v in raw.replace(" ", "").split(",") if v)
        return raw
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type(default).__name__}") from None


def _format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "on" if v else "off"
    if isinstance(v, tuple):
        return ", ".join(repr(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def loads(text: str, base: RunConfig | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    cfg = base or RunConfig()
    updates: dict = {}
    for section in parser.sections():
        if section == "run":
            for key, raw in parser.items("run"):
                if key != "seed":
                    raise ConfigError(f"[run] has no key {key!r}")
                updates["seed"] = _parse_value(raw, 0, "run.seed")
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        sub = getattr(cfg, section)
        known = {f.name: getattr(sub, f.name) for f in fields(sub)}
        vals = {}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"[{section}] has no key {key!r}; known keys: {', '.join(sorted(known))}")
            vals[key] = _parse_value(raw, known[key], f"{section}.{key}")
        updates[section] = replace(sub, **vals)
    return replace(cfg, **updates).validate()


def dumps(cfg: RunConfig) -> str:
    out = io.StringIO()
    out.write("[run]\n")
    out.write(f"seed = {cfg.seed}\n")
    for section in _SECTIONS:
        sub = getattr(cfg, section)
        out.write(f"\n[{section}]\n")
        for f in fields(sub):
            out.write(f"{f.name} = {_format_value(getattr(sub, f.name))}\n")
    return out.getvalue()


def load(path: str | Path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    return loads(p.read_text())


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    """Apply flat overrides such as ``seed``, ``lam``, ``dmae``, ``xua``, ``epochs``."""
    out = cfg
    if kw.get("seed") is not None:
        out = replace(out, seed=int(kw["seed"]))
    if kw.get("lam") is not None:
        out = replace(out, xua=replace(out.xua, lam=float(kw["lam"])))
    if kw.get("dmae") is not None:
        out = replace(out, dmae=replace(out.dmae, enabled=bool(kw["dmae"])))
    if kw.get("xua") is not None:
        out = replace(out, xua=replace(out.xua, enabled=bool(kw["xua"])))
    if kw.get("epochs") is not None:
        out = replace(out, optim=replace(out.optim, epochs=int(kw["epochs"])))
    return out.validate()
