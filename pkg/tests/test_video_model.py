import io
import struct

import numpy as np
import pytest

from app.core.exceptions import FormatError, TruncatedError, UnsupportedError, VideoIOError
from app.models.video import LabeledVideo, Video, as_float, quantize
from app.schemas.dataset import DatasetConfig, DegradationSpec
from app.services.synth import (
    DEGRADATION_LIMITS,
    MOS_COEFFICIENTS,
    draw_spec,
    generate_dataset,
    mos_for_spec,
    synth_video,
)
from app.utils.rvid import (
    HEADER,
    read_manifest,
    read_video,
    save_video,
    write_manifest,
    write_video,
)

from tests.conftest import random_video


def encode(video: Video) -> bytes:
    buffer = io.BytesIO()
    write_video(video, buffer)
    return buffer.getvalue()


class TestRvid:
    def test_single_pixel_layout(self):
        video = Video(pixels=np.array([[[[0, 128, 255]]]], dtype=np.uint8))
        buffer = io.BytesIO()
        assert write_video(video, buffer) == 22
        data = buffer.getvalue()
        assert data[:4] == b"RVID"
        assert data[-3:] == bytes([0x00, 0x80, 0xFF])

    def test_byte_count(self, rng):
        video = random_video(rng, 2, 4, 4)
        assert write_video(video, io.BytesIO()) == 19 + 96

    def test_round_trip_random_videos(self, rng):
        for _ in range(200):
            T, H, W = rng.integers(1, 9), rng.integers(1, 65), rng.integers(1, 65)
            video = random_video(rng, T, H, W)
            assert read_video(io.BytesIO(encode(video))) == video

    def test_bad_magic(self):
        with pytest.raises(FormatError):
            read_video(io.BytesIO(b"XVID" + bytes(40)))

    def test_truncated_payload(self):
        header = HEADER.pack(b"RVID", 1, 1, 2, 2, 3)
        with pytest.raises(TruncatedError):
            read_video(io.BytesIO(header + bytes(5)))

    def test_truncated_header(self):
        with pytest.raises(TruncatedError):
            read_video(io.BytesIO(b"RVID\x01\x00"))

    def test_unsupported_channels(self):
        header = HEADER.pack(b"RVID", 1, 1, 1, 1, 4)
        with pytest.raises(UnsupportedError):
            read_video(io.BytesIO(header + bytes(4)))

    def test_unsupported_version(self):
        header = struct.pack("<4sHIIIB", b"RVID", 2, 1, 1, 1, 3)
        with pytest.raises(UnsupportedError):
            read_video(io.BytesIO(header + bytes(3)))

    def test_sink_failure_reports_bytes_written(self, rng):
        class FailingSink:
            def __init__(self):
                self.calls = 0

            def write(self, chunk):
                self.calls += 1
                if self.calls > 1:
                    raise OSError("disk full")
                return len(chunk)

        with pytest.raises(VideoIOError) as exc:
            write_video(random_video(rng, 1, 2, 2), FailingSink())
        assert exc.value.bytes_written == 19

    def test_manifest_round_trip(self, rng, tmp_path):
        videos = [random_video(rng, 2, 4, 4) for _ in range(3)]
        entries = []
        for i, video in enumerate(videos):
            save_video(video, tmp_path / "clips" / f"c{i}.rvid")
            entries.append((f"clips/c{i}.rvid", 1.5 + i))
        manifest = write_manifest(entries, tmp_path / "manifest.csv")

        assert manifest.read_bytes().startswith(b"path,mos\n")
        loaded = read_manifest(manifest)
        assert [item.video_id for item in loaded] == ["c0", "c1", "c2"]
        assert [item.mos for item in loaded] == [1.5, 2.5, 3.5]
        assert all(item.video == video for item, video in zip(loaded, videos))

    def test_manifest_not_utf8(self, tmp_path):
        manifest = tmp_path / "manifest.csv"
        manifest.write_bytes(b"path,mos\n\xff\xfe.rvid,3.0\n")
        with pytest.raises(FormatError):
            read_manifest(manifest)

    @pytest.mark.parametrize(
        "body",
        ["c0.rvid,high\n", "c0.rvid\n", "c0.rvid,3.0,extra\n", "c0.rvid,nan\n"],
    )
    def test_manifest_bad_row(self, tmp_path, body):
        manifest = tmp_path / "manifest.csv"
        manifest.write_text("path,mos\n" + body, encoding="utf-8")
        with pytest.raises(FormatError) as exc:
            read_manifest(manifest)
        assert "第 2 行" in str(exc.value)

    def test_manifest_bad_header(self, tmp_path):
        manifest = tmp_path / "manifest.csv"
        manifest.write_text("file,score\nc0.rvid,3.0\n", encoding="utf-8")
        with pytest.raises(FormatError):
            read_manifest(manifest)


class TestQuantize:
    @pytest.mark.parametrize(
        "value, expected",
        [(-3.2, 0), (254.5, 255), (127.4, 127), (127.5, 128), (300.0, 255), (-0.5, 0)],
    )
    def test_rounding_and_clamp(self, value, expected):
        video = quantize(np.full((1, 1, 1, 3), value))
        assert video.pixels[0, 0, 0, 0] == expected

    def test_idempotent(self, rng):
        fv = rng.uniform(-20, 280, size=(3, 5, 5, 3))
        once = quantize(fv)
        assert quantize(as_float(once)) == once


class TestVideoValidation:
    def test_rejects_wrong_dtype(self):
        with pytest.raises(TypeError):
            Video(pixels=np.zeros((1, 1, 1, 3), dtype=np.int16))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            Video(pixels=np.zeros((0, 1, 1, 3), dtype=np.uint8))

    def test_mos_range(self, rng):
        with pytest.raises(ValueError):
            LabeledVideo(video=random_video(rng, 1, 1, 1), mos=5.5)


class TestSynth:
    def test_clean_spec_has_top_mos(self):
        labeled = synth_video(DegradationSpec(seed=3), 4, 16, 16)
        assert labeled.mos == 5.0

    def test_noise_lowers_mos(self):
        a = DegradationSpec(noise_sigma=2.0, seed=1)
        b = DegradationSpec(noise_sigma=4.0, seed=1)
        assert mos_for_spec(a) > mos_for_spec(b)

    def test_deterministic(self):
        spec = DegradationSpec(
            base_pattern="bands", noise_sigma=5, blur_radius=1, block_size=4, temporal_jitter=2, seed=11
        )
        assert synth_video(spec, 4, 16, 16).video == synth_video(spec, 4, 16, 16).video

    @pytest.mark.parametrize("pattern", ["gradient", "checker", "bands"])
    def test_patterns_render(self, pattern):
        spec = DegradationSpec(base_pattern=pattern, blur_radius=2, block_size=3, seed=5)
        video = synth_video(spec, 3, 10, 14).video
        assert video.shape == (3, 10, 14, 3)

    def test_label_monotonicity(self, rng):
        fields = ["noise_sigma", "blur_radius", "block_size", "temporal_jitter"]
        for _ in range(100):
            base = {
                "noise_sigma": float(rng.uniform(0, 20)),
                "blur_radius": int(rng.integers(0, 5)),
                "block_size": int(rng.integers(0, 17)),
                "temporal_jitter": float(rng.uniform(0, 4)),
            }
            name = fields[int(rng.integers(len(fields)))]
            low, high = dict(base), dict(base)
            if isinstance(base[name], int):
                low[name], high[name] = base[name], base[name] + int(rng.integers(1, 4))
            else:
                low[name], high[name] = base[name], base[name] + float(rng.uniform(0.1, 3))
            assert mos_for_spec(DegradationSpec(**low)) > mos_for_spec(DegradationSpec(**high))

    def test_mos_is_spread_over_range(self):
        cfg = DatasetConfig(count=40)
        mos = np.array([mos_for_spec(draw_spec(cfg, 3, i)) for i in range(cfg.count)])
        # 约一半视频 MOS ≥ 3, 两个攻击方向都有样本
        assert 0.35 <= np.mean(mos >= 3.0) <= 0.65
        assert mos.min() < 1.6
        assert mos.max() > 4.6

        floor = 1.0 + 4.0 * np.exp(-sum(
            coef * float(getattr(cfg, DEGRADATION_LIMITS[name])) for name, coef in MOS_COEFFICIENTS.items()
        ))
        counts, _ = np.histogram(mos, bins=4, range=(floor, 5.0))
        assert all(6 <= c <= 14 for c in counts)

    def test_drawn_specs_respect_limits(self):
        cfg = DatasetConfig(count=30, noise_sigma_max=5.0, blur_radius_max=1, block_size_max=4)
        for i in range(cfg.count):
            spec = draw_spec(cfg, 8, i)
            assert 0.0 <= spec.noise_sigma <= 5.0 + 1e-9
            assert 0 <= spec.blur_radius <= 1
            assert 0 <= spec.block_size <= 4
            assert 0.0 <= spec.temporal_jitter <= cfg.temporal_jitter_max + 1e-9

    def test_no_degradation_allowed_gives_clean_videos(self):
        cfg = DatasetConfig(
            count=5, noise_sigma_max=0.0, blur_radius_max=0, block_size_max=0, temporal_jitter_max=0.0
        )
        assert all(mos_for_spec(draw_spec(cfg, 1, i)) == 5.0 for i in range(cfg.count))

    def test_generate_dataset(self):
        cfg = DatasetConfig(count=4, frames=3, height=8, width=8)
        first = generate_dataset(cfg, master_seed=9)
        second = generate_dataset(cfg, master_seed=9)
        assert [item.video_id for item in first] == ["v0000", "v0001", "v0002", "v0003"]
        assert all(a.video == b.video and a.mos == b.mos for a, b in zip(first, second))
        assert all(1.0 <= item.mos <= 5.0 for item in first)
