import numpy as np
import pytest

from app.core.exceptions import GridError, RangeError
from app.models.transforms import GridParams, GuardianMap, SamplingParams
from app.models.video import Video, as_float
from app.services.defense import (
    apply_guardian_map,
    bilinear_matrix,
    center_crop_to_multiple,
    continuous_sample,
    draw_start_frames,
    gen_guardian_map,
    grid_fragment,
    guardian_jacobian_mask,
    resize_bilinear,
    sample_grid_offsets,
    skip_indices,
    skip_sample,
)

from tests.conftest import random_video


def frame_index_video(T: int) -> Video:
    """第 t 帧所有像素为 t, 便于检查采样索引"""
    pixels = np.broadcast_to(np.arange(T, dtype=np.uint8)[:, None, None, None], (T, 2, 2, 3))
    return Video(pixels=pixels.copy())


def brute_force_fragment(frames: np.ndarray, gp: GridParams) -> np.ndarray:
    T, H, W, C = frames.shape
    G, S = gp.G, gp.S
    out = np.zeros((T, G * S, G * S, C), dtype=frames.dtype)
    for i in range(G):
        for j in range(G):
            h, w = gp.offsets[i, j]
            for di in range(S):
                for dj in range(S):
                    src_r = i * (H // G) + h + di
                    src_c = j * (W // G) + w + dj
                    out[:, i * S + di, j * S + dj, :] = frames[:, src_r, src_c, :]
    return out


class TestTemporalSampling:
    @pytest.mark.parametrize(
        "s, n, d, expected", [(0, 2, 3, [0, 2, 4]), (1, 3, 2, [1, 4])]
    )
    def test_skip_sample(self, s, n, d, expected):
        sampled = skip_sample(frame_index_video(10), SamplingParams(s=s, n=n, d=d))
        assert list(sampled.pixels[:, 0, 0, 0]) == expected

    def test_skip_sample_out_of_range(self):
        with pytest.raises(RangeError) as exc:
            skip_sample(frame_index_video(10), SamplingParams(s=0, n=2, d=6))
        assert exc.value.required == 11
        assert exc.value.available == 10

    def test_continuous_sample(self):
        sampled = continuous_sample(frame_index_video(40), 4, 32)
        assert list(sampled.pixels[:, 0, 0, 0]) == list(range(4, 36))

    def test_continuous_whole_video(self):
        video = frame_index_video(5)
        assert continuous_sample(video, 0, 5) == video

    def test_continuous_out_of_range(self):
        with pytest.raises(RangeError):
            continuous_sample(frame_index_video(5), 2, 5)

    def test_start_frames_differ(self, rng):
        for _ in range(50):
            s_intra, s_inter = draw_start_frames(20, 2, 8, rng)
            assert s_intra != s_inter
            assert 0 <= s_intra <= 20 - 1 - 2 * 7
            assert 0 <= s_inter <= 20 - 8

    def test_start_frames_fixed_without_random_start(self, rng):
        assert draw_start_frames(20, 2, 8, rng, random_start=False) == (0, 6)

    def test_start_frames_insufficient(self, rng):
        with pytest.raises(RangeError):
            draw_start_frames(10, 2, 8, rng)


class TestGridSampling:
    def test_zero_slack_offsets(self, rng):
        gp = sample_grid_offsets(224, 224, 7, 32, rng)
        assert np.all(gp.offsets == 0)

    def test_offset_range_and_reproducibility(self):
        first = sample_grid_offsets(448, 448, 7, 32, np.random.default_rng(1))
        second = sample_grid_offsets(448, 448, 7, 32, np.random.default_rng(1))
        assert np.array_equal(first.offsets, second.offsets)
        assert first.offsets.min() >= 0 and first.offsets.max() <= 32

    def test_indivisible_size(self, rng):
        with pytest.raises(GridError):
            sample_grid_offsets(225, 224, 7, 32, rng)

    def test_patch_larger_than_cell(self, rng):
        with pytest.raises(GridError):
            sample_grid_offsets(64, 64, 4, 17, rng)

    def test_zero_slack_is_identity(self, rng):
        video = random_video(rng, 2, 64, 64)
        gp = sample_grid_offsets(64, 64, 2, 32, rng)
        assert grid_fragment(video, gp) == video

    def test_matches_brute_force_oracle(self, rng):
        for _ in range(50):
            G = int(rng.integers(1, 6))
            S = int(rng.integers(1, 64 // G + 1))
            H = G * int(rng.integers(S, 64 // G + 1))
            W = G * int(rng.integers(S, 64 // G + 1))
            frames = random_video(rng, 2, H, W).pixels
            gp = sample_grid_offsets(H, W, G, S, rng)
            out = grid_fragment(frames, gp)
            assert out.shape == (2, G * S, G * S, 3)
            assert np.array_equal(out, brute_force_fragment(frames, gp))

    def test_alignment_across_frames(self, rng):
        frame = random_video(rng, 1, 32, 32).pixels
        frames = np.concatenate([frame, frame], axis=0)
        out = grid_fragment(frames, sample_grid_offsets(32, 32, 4, 5, rng))
        assert np.array_equal(out[0], out[1])

    def test_center_crop(self, rng):
        frames = random_video(rng, 1, 30, 31).pixels
        cropped, top, left = center_crop_to_multiple(frames, 4)
        assert cropped.shape[1:3] == (28, 28)
        assert (top, left) == (1, 1)
        assert np.array_equal(cropped, frames[:, 1:29, 1:29])


class TestGuardianMap:
    def test_values_are_plus_minus_one(self, rng):
        gm = gen_guardian_map(16, 16, rng)
        assert set(np.unique(gm.values)) <= {-1, 1}
        assert gm.region_mask is None

    def test_deterministic(self):
        a = gen_guardian_map(8, 8, np.random.default_rng(3))
        b = gen_guardian_map(8, 8, np.random.default_rng(3))
        assert np.array_equal(a.values, b.values)

    def test_mean_concentration(self):
        within = sum(
            abs(gen_guardian_map(64, 64, np.random.default_rng(seed)).values.mean()) <= 0.1
            for seed in range(1000)
        )
        assert within >= 990

    def test_constant_frame(self, rng):
        fv = np.full((2, 8, 8, 3), 128.0)
        out = apply_guardian_map(fv, gen_guardian_map(8, 8, rng))
        assert set(np.unique(out)) <= {127.0, 129.0}
        assert np.array_equal(out[0], out[1])

    def test_clamp(self):
        fv = np.array([0.0, 255.0]).reshape(1, 1, 2, 1).repeat(3, axis=3)
        values = np.array([-1, 1], dtype=np.int8).reshape(1, 2, 1).repeat(3, axis=2)
        out = apply_guardian_map(fv, GuardianMap(values=values))
        assert np.array_equal(out, fv)
        assert not guardian_jacobian_mask(fv, GuardianMap(values=values)).any()

    def test_region_mask_left_half(self, rng):
        fv = as_float(random_video(rng, 2, 8, 8))
        mask = np.zeros((8, 8), dtype=bool)
        mask[:, :4] = True
        gm = gen_guardian_map(8, 8, rng)
        out = apply_guardian_map(fv, GuardianMap(values=gm.values, region_mask=mask))
        assert np.array_equal(out[:, :, 4:], fv[:, :, 4:])

    def test_per_frame_maps(self, rng):
        gm = gen_guardian_map(8, 8, rng, frames=3)
        assert gm.per_frame
        out = apply_guardian_map(np.full((3, 8, 8, 3), 100.0), gm)
        assert np.abs(out - 100.0).max() == 1.0

    def test_shape_mismatch(self, rng):
        with pytest.raises(GridError):
            apply_guardian_map(np.zeros((1, 4, 4, 3)), gen_guardian_map(5, 4, rng))

    def test_perturbation_bound(self, rng):
        fv = rng.uniform(1, 254, size=(3, 10, 10, 3))
        out = apply_guardian_map(fv, gen_guardian_map(10, 10, rng))
        assert np.allclose(np.abs(out - fv), 1.0)


class TestResize:
    def test_identity(self, rng):
        frame = rng.uniform(0, 255, size=(7, 9, 3))
        assert np.abs(resize_bilinear(frame, 7, 9) - frame).max() == 0.0

    def test_constant(self):
        frame = np.full((5, 6, 3), 42.0)
        assert np.allclose(resize_bilinear(frame, 11, 3), 42.0)

    def test_two_by_two_average(self):
        frame = np.array([[0.0, 255.0], [255.0, 0.0]])[..., None]
        assert resize_bilinear(frame, 1, 1)[0, 0, 0] == 127.5

    def test_rows_sum_to_one(self):
        for in_size, out_size in [(8, 3), (3, 8), (224, 56), (1, 4)]:
            assert np.allclose(bilinear_matrix(in_size, out_size).sum(axis=1), 1.0)

    def test_matches_per_pixel_oracle(self, rng):
        frame = rng.uniform(0, 255, size=(6, 10, 2))
        out = resize_bilinear(frame, 4, 7)
        H, W = frame.shape[:2]
        for oy in range(4):
            for ox in range(7):
                sy = min(max((oy + 0.5) * H / 4 - 0.5, 0.0), H - 1)
                sx = min(max((ox + 0.5) * W / 7 - 0.5, 0.0), W - 1)
                y0, x0 = int(np.floor(sy)), int(np.floor(sx))
                y1, x1 = min(y0 + 1, H - 1), min(x0 + 1, W - 1)
                fy, fx = sy - y0, sx - x0
                expected = (
                    (1 - fy) * (1 - fx) * frame[y0, x0]
                    + (1 - fy) * fx * frame[y0, x1]
                    + fy * (1 - fx) * frame[y1, x0]
                    + fy * fx * frame[y1, x1]
                )
                assert np.allclose(out[oy, ox], expected, atol=1e-9)


def test_skip_indices_copy_only(rng):
    video = random_video(rng, 9, 4, 4)
    idx = skip_indices(9, SamplingParams(s=1, n=2, d=4))
    assert np.array_equal(skip_sample(video, SamplingParams(s=1, n=2, d=4)).pixels, video.pixels[idx])
