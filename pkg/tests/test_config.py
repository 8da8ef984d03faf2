"""Run configuration parsing, validation and hashing."""
from __future__ import annotations

from dataclasses import replace

import pytest

from radarfuse.harness.config import ConfigError, RunConfig, dumps, load, loads, with_overrides


def test_defaults_valid():
    cfg = RunConfig().validate()
    assert cfg.xua.lam == 0.1 and cfg.dmae.alpha == 0.25 and cfg.dmae.gamma == 2.0
    assert cfg.optim.epochs == 40
    assert cfg.loss.motion_weight == 1.0


def test_round_trip_and_hash():
    cfg = with_overrides(RunConfig(), seed=5, lam=0.5, dmae=False, epochs=3)
    back = loads(dumps(cfg))
    assert back == cfg and back.hash() == cfg.hash()


def test_hash_sensitive():
    a = RunConfig()
    assert a.hash() != with_overrides(a, seed=1).hash()
    assert a.hash() != with_overrides(a, lam=0.5).hash()
    assert len(a.hash()) == 16


def test_partial_file(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[run]\nseed = 3\n\n[xua]\nlam = 0.001\nenabled = off\n")
    cfg = load(p)
    assert cfg.seed == 3 and cfg.xua.lam == 0.001 and not cfg.xua.enabled
    assert cfg.model == RunConfig().model


@pytest.mark.parametrize(
    "text",
    [
        "[nope]\nx = 1\n",
        "[xua]\nlambda = 1\n",
        "[optim]\nepochs = many\n",
        "[xua]\nlam = -1\n",
        "[data]\nframes = 10\ntrain_frames = 10\n",
        "[model]\nlidar_keypoints = 8, 16, 4, 2\n",
        "[dmae]\nalpha = 1.5\n",
        "not an ini",
    ],
)
def test_invalid(text):
    with pytest.raises(ConfigError):
        loads(text)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load(tmp_path / "absent.ini")


def test_views():
    cfg = RunConfig()
    assert [s.num_keypoints for s in cfg.radar_stages()] == list(cfg.model.radar_keypoints)
    assert cfg.scene_config().sensor.ghost_rate == cfg.data.ghost_rate
    assert cfg.eval_config().iou_thresholds == {"Car": 0.5, "Pedestrian": 0.25, "Cyclist": 0.25}
    assert replace(cfg, seed=2).validate().seed == 2
