"""Down-sampling and set-abstraction stages."""
from __future__ import annotations

import numpy as np
import pytest

from radarfuse.autodiff import Tensor, grad_check
from radarfuse.backbone import (
    BackboneError,
    StageConfig,
    default_stage_configs,
    encode_cloud,
    init_backbone_params,
    init_stage_params,
    set_abstraction,
)

SMALL = [
    StageConfig(24, 0.6, 6, (4, 8)),
    StageConfig(12, 1.0, 6, (8, 12)),
    StageConfig(6, 1.6, 4, (12, 16)),
    StageConfig(3, 3.0, 4, (16, 20)),
]


def _cloud(rng, n=60):
    return rng.uniform(-3.0, 3.0, size=(n, 3)), rng.normal(size=(n, 2))


def _params(rng, in_features=2):
    return init_backbone_params(rng, in_features, SMALL, "b")


class TestStageConfig:
    def test_invalid(self):
        with pytest.raises(BackboneError):
            StageConfig(0, 1.0, 4, (4,))
        with pytest.raises(BackboneError):
            StageConfig(4, 0.0, 4, (4,))
        with pytest.raises(BackboneError):
            StageConfig(4, 1.0, 4, ())

    def test_default_widths(self):
        cfgs = default_stage_configs()
        assert [c.out_width for c in cfgs] == [32, 64, 128, 256]
        assert [c.num_keypoints for c in cfgs] == [256, 128, 64, 32]

    def test_increasing_keypoints_rejected(self, rng):
        bad = [SMALL[1], SMALL[0], SMALL[2], SMALL[3]]
        xyz, f = _cloud(rng)
        with pytest.raises(BackboneError):
            encode_cloud(xyz, f, bad, _params(rng), "b")

    def test_three_stages_rejected(self, rng):
        xyz, f = _cloud(rng)
        with pytest.raises(BackboneError):
            encode_cloud(xyz, f, SMALL[:3], _params(rng), "b")


class TestSetAbstraction:
    def test_shape(self, rng):
        xyz, f = _cloud(rng)
        cfg = SMALL[0]
        out = set_abstraction(xyz, Tensor(f), cfg, init_stage_params(rng, 2, cfg, "s"), "s")
        assert out.features.shape == (24, 8)
        assert out.keypoints.shape == (24, 3)
        # keypoints are rows of the input
        assert np.array_equal(out.keypoints, xyz[out.indices])

    def test_duplicates_leave_output_unchanged(self, rng):
        xyz, f = _cloud(rng, 30)
        cfg = StageConfig(10, 1.2, 64, (6, 8))
        params = init_stage_params(rng, 2, cfg, "s")
        for k, t in params.items():
            if ".b" in k:
                t.data = rng.uniform(0.05, 0.2, size=t.shape)
        base = set_abstraction(xyz, Tensor(f), cfg, params, "s")
        dup = set_abstraction(np.vstack([xyz, xyz]), Tensor(np.vstack([f, f])), cfg, params, "s")
        assert np.array_equal(dup.keypoints, base.keypoints)
        assert np.array_equal(dup.features.data, base.features.data)

    def test_gradient_matches_finite_differences(self, rng):
        xyz, f = _cloud(rng, 25)
        cfg = StageConfig(6, 1.5, 5, (4, 5))
        params = init_stage_params(rng, 2, cfg, "s")
        for k, t in params.items():
            if ".b" in k:
                t.data = rng.uniform(0.05, 0.2, size=t.shape)
        feats = Tensor(f, requires_grad=True)
        r = rng.normal(size=(6, 5))
        from radarfuse import autodiff as ad

        err = grad_check(lambda: ad.reduce_sum(set_abstraction(xyz, feats, cfg, params, "s").features * r), [feats, *params.values()])
        assert err < 1e-5

    def test_feature_row_mismatch(self, rng):
        xyz, f = _cloud(rng)
        cfg = SMALL[0]
        with pytest.raises(BackboneError):
            set_abstraction(xyz, Tensor(f[:10]), cfg, init_stage_params(rng, 2, cfg, "s"), "s")

    def test_velocity_follows_keypoints(self, rng):
        xyz, f = _cloud(rng)
        v = rng.normal(size=(60, 2))
        cfg = SMALL[0]
        out = set_abstraction(xyz, Tensor(f), cfg, init_stage_params(rng, 2, cfg, "s"), "s", velocity=v)
        assert np.array_equal(out.velocity, v[out.indices])


class TestEncodeCloud:
    def test_stage_shapes(self, rng):
        xyz, f = _cloud(rng)
        outs = encode_cloud(xyz, f, SMALL, _params(rng), "b")
        assert [o.features.shape for o in outs] == [(24, 8), (12, 12), (6, 16), (3, 20)]

    def test_deterministic(self, rng):
        xyz, f = _cloud(rng)
        params = _params(rng)
        a = encode_cloud(xyz, f, SMALL, params, "b")
        b = encode_cloud(xyz, f, SMALL, params, "b")
        for x, y in zip(a, b):
            assert np.array_equal(x.features.data, y.features.data)
            assert np.array_equal(x.source, y.source)

    def test_permutation_with_fixed_seed_point(self, rng):
        # FPS depends on the point set and the seed point only, so moving the
        # seed point along with the permutation reproduces every stage
        xyz, f = _cloud(rng)
        params = _params(rng)
        base = encode_cloud(xyz, f, SMALL, params, "b", seed_index=0)
        perm = rng.permutation(60)
        inv = np.argsort(perm)
        moved = encode_cloud(xyz[perm], f[perm], SMALL, params, "b", seed_index=int(inv[0]))
        for x, y in zip(base, moved):
            assert np.array_equal(x.keypoints, y.keypoints)
            assert np.allclose(x.features.data, y.features.data, rtol=0, atol=1e-12)
            assert np.array_equal(perm[y.source], x.source)

    def test_source_indexes_raw_cloud(self, rng):
        xyz, f = _cloud(rng)
        for out in encode_cloud(xyz, f, SMALL, _params(rng), "b"):
            assert np.array_equal(xyz[out.source], out.keypoints)

    def test_hook_replaces_features(self, rng):
        xyz, f = _cloud(rng)
        seen = []

        def hook(i, out):
            seen.append(i)
            out.features = Tensor(np.zeros(out.features.shape))
            return out

        outs = encode_cloud(xyz, f, SMALL, _params(rng), "b", stage_hook=hook)
        assert seen == [0, 1, 2, 3]
        assert not np.any(outs[-1].features.data)

    def test_too_few_points(self, rng):
        xyz, f = _cloud(rng, 20)
        with pytest.raises(BackboneError):
            encode_cloud(xyz, f, SMALL, _params(rng), "b")
