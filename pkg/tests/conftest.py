from __future__ import annotations

import math

import numpy as np
import pytest

from radarfuse import kernels

_NAMES = ("farthest_point_sample", "ball_query", "hungarian_square", "bev_intersection_area", "bev_intersection_matrix")
BACKENDS = ["python"] + (["compiled"] if kernels.compiled is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Route every kernel call through one implementation for the test's duration."""
    impl = getattr(kernels, request.param)
    for name in _NAMES:
        monkeypatch.setattr(kernels, name, getattr(impl, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_box(rng, center_scale=2.0) -> np.ndarray:
    return np.array(
        [
            *rng.uniform(-center_scale, center_scale, size=3),
            *rng.uniform(0.5, 3.0, size=3),
            rng.uniform(-np.pi, np.pi),
        ]
    )


def tiny_config(**kw):
    """A run small enough for unit tests: few frames, narrow stages, one epoch."""
    from dataclasses import replace

    from radarfuse.harness.config import RunConfig, with_overrides

    cfg = RunConfig()
    cfg = replace(
        cfg,
        data=replace(cfg.data, frames=6, train_frames=4, max_objects=4),
        model=replace(
            cfg.model,
            lidar_keypoints=(32, 16, 8, 4),
            lidar_widths=(8, 8, 16, 16),
            radar_keypoints=(16, 8, 8, 4),
            radar_widths=(8, 8, 16, 16),
            max_neighbors=6,
            head_hidden=16,
            fusion_width=8,
        ),
        optim=replace(cfg.optim, epochs=1),
    )
    return with_overrides(cfg, **kw).validate()


def mc_bev_iou(a: np.ndarray, b: np.ndarray, n_side: int = 1000, seed: int = 0) -> float:
    """Stratified jittered sampling over box ``a``'s footprint: n_side**2 samples."""
    rng = np.random.default_rng(seed)
    grid = (np.arange(n_side)[:, None] + rng.uniform(size=(n_side, n_side))) / n_side - 0.5
    gx = grid
    gy = (np.arange(n_side)[None, :] + rng.uniform(size=(n_side, n_side))) / n_side - 0.5
    lx, ly = gx.ravel() * a[3], gy.ravel() * a[4]
    c, s = math.cos(a[6]), math.sin(a[6])
    wx, wy = a[0] + c * lx - s * ly, a[1] + s * lx + c * ly
    # into b's frame
    dx, dy = wx - b[0], wy - b[1]
    cb, sb = math.cos(b[6]), math.sin(b[6])
    bx, by = cb * dx + sb * dy, -sb * dx + cb * dy
    frac = np.mean((np.abs(bx) <= b[3] / 2) & (np.abs(by) <= b[4] / 2))
    area_a, area_b = a[3] * a[4], b[3] * b[4]
    inter = frac * area_a
    return inter / (area_a + area_b - inter)


_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.outcome != "passed"):
        return
    number, title = mark.args
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
    _CRITERIA[number] = (status, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[number]
        line = f"{status} criterion {number}: {title}"
        terminalreporter.write_line(line + (f" [{detail}]" if detail else ""))
