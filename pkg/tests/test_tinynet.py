import io
import struct

import numpy as np
import pytest

from app.core.exceptions import FormatError, ModelError, TruncatedError, UnsupportedError
from app.services.tinynet import (
    D_INTER,
    D_INTRA,
    PARAM_SHAPES,
    TinyNetParams,
    TinyNetScorer,
    init_params,
    tinynet_forward,
    tinynet_input_gradient,
)
from app.utils.params_io import MAGIC, encode_params, load_params, read_params, save_params

from tests.conftest import random_video
from tests.test_scorers import pixelwise_fd, random_pixels


def score_at(x, params, defense, seed):
    return tinynet_forward(x, params, defense, np.random.default_rng(seed)).score


class TestForward:
    def test_embedding_shapes(self, small_video, tiny_params, tiny_defense, rng):
        out = tinynet_forward(small_video, tiny_params, tiny_defense, rng)
        assert np.isfinite(out.score)
        assert out.intra.values.shape == (D_INTRA,)
        assert out.inter.values.shape == (D_INTER,)
        # 帧间分支 3 帧 → 2 个帧差 → 2 段
        assert out.fused_intra.shape == (2, D_INTRA)
        assert out.fused_inter.shape == (2, D_INTER)

    def test_zero_bottleneck_is_identity_fusion(self, small_video, tiny_defense, rng):
        params = init_params(np.random.default_rng(3), zero_bottleneck=True)
        out = tinynet_forward(small_video, params, tiny_defense, rng)
        assert np.array_equal(out.fused_intra, np.broadcast_to(out.intra.values, out.fused_intra.shape))
        assert np.array_equal(out.fused_inter.mean(axis=0), out.inter.values)

    def test_same_rng_state_is_bit_identical(self, small_video, tiny_params, tiny_defense):
        a = score_at(small_video, tiny_params, tiny_defense, 11)
        b = score_at(small_video, tiny_params, tiny_defense, 11)
        assert a == b

    def test_randomness_changes_score(self, small_video, tiny_params, tiny_defense):
        scores = {score_at(small_video, tiny_params, tiny_defense, seed) for seed in range(5)}
        assert len(scores) > 1

    def test_deterministic_without_randomness(self, small_video, tiny_params, tiny_defense):
        defense = tiny_defense.without_randomness()
        scores = {score_at(small_video, tiny_params, defense, seed) for seed in range(5)}
        assert len(scores) == 1

    def test_inter_branch_disabled(self, small_video, tiny_params, tiny_defense, rng):
        defense = tiny_defense.model_copy(update={"inter_branch": False})
        out = tinynet_forward(small_video, tiny_params, defense, rng)
        assert np.array_equal(out.inter.values, np.zeros(D_INTER))
        assert out.fused_intra.shape == (1, D_INTRA)

    def test_single_frame_inter_branch(self, rng, tiny_params, tiny_defense):
        defense = tiny_defense.model_copy(update={"frames": 1})
        with pytest.raises(ModelError):
            tinynet_forward(random_video(rng, 4, 32, 32), tiny_params, defense, rng)

    def test_bad_param_shape(self, tiny_params):
        tensors = dict(tiny_params.tensors)
        tensors["intra.w"] = np.zeros((D_INTRA, 3))
        with pytest.raises(ModelError):
            TinyNetParams(tensors)

    def test_missing_param(self, tiny_params):
        tensors = dict(tiny_params.tensors)
        del tensors["head.0.b"]
        with pytest.raises(ModelError):
            TinyNetParams(tensors)

    def test_init_bounds(self):
        params = init_params(np.random.default_rng(0))
        bound = 1.0 / np.sqrt(27)
        assert np.abs(params["conv.w"]).max() <= bound
        assert np.abs(params["conv.b"]).max() <= bound


class TestInputGradient:
    def test_matches_finite_differences(self, rng, tiny_params, tiny_defense):
        for _ in range(5):
            x = rng.uniform(2, 253, size=(4, 32, 32, 3))
            grad = tinynet_input_gradient(x, tiny_params, tiny_defense, np.random.default_rng(21))
            pixels = [p for p in random_pixels(rng, x.shape, 400) if grad[p] != 0][:40]
            assert pixels
            fd = pixelwise_fd(lambda v: score_at(v, tiny_params, tiny_defense, 21), x, pixels)
            analytic = np.array([grad[p] for p in pixels])
            assert np.linalg.norm(fd - analytic) < 1e-4 * np.linalg.norm(analytic)

    def test_matches_finite_differences_with_resize_intra(self, rng, tiny_params, tiny_defense):
        defense = tiny_defense.model_copy(update={"grid_sampling": False, "per_frame_guardian": True})
        x = rng.uniform(2, 253, size=(4, 32, 32, 3))
        grad = tinynet_input_gradient(x, tiny_params, defense, np.random.default_rng(4))
        pixels = [p for p in random_pixels(rng, x.shape, 400) if grad[p] != 0][:40]
        fd = pixelwise_fd(lambda v: score_at(v, tiny_params, defense, 4), x, pixels)
        analytic = np.array([grad[p] for p in pixels])
        assert np.linalg.norm(fd - analytic) < 1e-4 * np.linalg.norm(analytic)

    def test_unsampled_frame_has_zero_gradient(self, small_video, tiny_params, tiny_defense, rng):
        # random_start 关闭: 帧内取 0,1,2, 帧间取 0,1,2, 第 3 帧从不被使用
        defense = tiny_defense.model_copy(update={"random_start": False})
        grad = tinynet_input_gradient(small_video, tiny_params, defense, rng)
        assert np.all(grad[3] == 0.0)
        assert np.any(grad[:3] != 0.0)

    def test_unsampled_pixels_have_zero_gradient(self, small_video, tiny_params, tiny_defense, rng):
        defense = tiny_defense.model_copy(update={"inter_branch": False})
        grad = tinynet_input_gradient(small_video, tiny_params, defense, rng)
        # 4×4 网格、4×4 补丁: 每帧最多 16·16 个像素被采样
        touched = np.any(grad != 0.0, axis=-1).sum(axis=(1, 2))
        assert touched.max() <= 16 * 16

    def test_doubling_last_layer_doubles_gradient(self, small_video, tiny_params, tiny_defense):
        doubled = tiny_params.copy()
        doubled.tensors["head.1.w"] = 2.0 * tiny_params["head.1.w"]
        g1 = tinynet_input_gradient(small_video, tiny_params, tiny_defense, np.random.default_rng(2))
        g2 = tinynet_input_gradient(small_video, doubled, tiny_defense, np.random.default_rng(2))
        assert np.allclose(g2, 2.0 * g1, rtol=1e-12, atol=0)


class TestTinyNetScorer:
    def test_passes_average(self, small_video, tiny_params, tiny_defense):
        scorer = TinyNetScorer(tiny_params, tiny_defense.model_copy(update={"stochastic_passes": 3}))
        shared = np.random.default_rng(8)
        expected = np.mean(
            [tinynet_forward(small_video, tiny_params, tiny_defense, shared).score for _ in range(3)]
        )
        assert scorer.score(small_video, np.random.default_rng(8)) == pytest.approx(expected, rel=1e-12)

    def test_value_matches_score(self, small_video, tiny_params, tiny_defense):
        scorer = TinyNetScorer(tiny_params, tiny_defense.model_copy(update={"stochastic_passes": 2}))
        value, grad = scorer.value_and_gradient(small_video, np.random.default_rng(8))
        assert value == scorer.score(small_video, np.random.default_rng(8))
        assert grad.shape == small_video.shape

    def test_gradient_always_available(self, small_video, tiny_params, tiny_defense):
        scorer = TinyNetScorer(tiny_params, tiny_defense)
        assert scorer.has_input_gradient
        grad = scorer.input_gradient(small_video, np.random.default_rng(3))
        expected = tinynet_input_gradient(small_video, tiny_params, tiny_defense, np.random.default_rng(3))
        assert np.array_equal(grad, expected)

    def test_with_region_limits_guardian(self, small_video, tiny_params, tiny_defense):
        defense = tiny_defense.model_copy(update={"inter_branch": False})
        plain = TinyNetScorer(tiny_params, defense.model_copy(update={"intra_guardian": False}))
        empty = TinyNetScorer(tiny_params, defense).with_region(
            np.zeros(small_video.shape[:3], dtype=bool)
        )
        assert empty.score(small_video, np.random.default_rng(1)) == plain.score(
            small_video, np.random.default_rng(1)
        )

    def test_without_guardian(self, tiny_params, tiny_defense):
        scorer = TinyNetScorer(tiny_params, tiny_defense).without_guardian()
        assert not scorer.defense.any_guardian


class TestParamsFile:
    def test_round_trip(self, tiny_params, tmp_path):
        path = tmp_path / "params.svqp"
        size = save_params(tiny_params, path)
        assert path.stat().st_size == size
        loaded = load_params(path)
        for name in PARAM_SHAPES:
            assert np.array_equal(loaded[name], tiny_params[name])

    def test_stable_bytes(self, tiny_params):
        assert encode_params(tiny_params) == encode_params(tiny_params.copy())
        assert encode_params(tiny_params)[:4] == MAGIC

    def test_bad_magic(self):
        with pytest.raises(FormatError):
            read_params(io.BytesIO(b"XVQP\x01\x00"))

    def test_truncated(self, tiny_params):
        data = encode_params(tiny_params)
        with pytest.raises(TruncatedError):
            read_params(io.BytesIO(data[:-3]))

    def test_unsupported_version(self):
        with pytest.raises(UnsupportedError):
            read_params(io.BytesIO(MAGIC + struct.pack("<H", 2)))

    def test_header_only_has_no_tensors(self):
        with pytest.raises(ModelError):
            read_params(io.BytesIO(MAGIC + struct.pack("<H", 1)))

    def test_duplicate_tensor(self, tiny_params):
        record = struct.pack("<H", 6) + b"conv.b" + struct.pack("<BI", 1, 8) + bytes(64)
        with pytest.raises(FormatError):
            read_params(io.BytesIO(encode_params(tiny_params) + record))

    def test_non_utf8_tensor_name(self):
        record = struct.pack("<H", 2) + b"\xff\xfe" + struct.pack("<B", 0) + bytes(8)
        with pytest.raises(FormatError):
            read_params(io.BytesIO(MAGIC + struct.pack("<H", 1) + record))
