import numpy as np
import pytest

from conftest import multi_octave_texture, subpixel_shift
from nnseg.optical_flow import (
    FlowField,
    FlowParams,
    clip_flow_encode,
    dense_flow,
    flow_to_hsv,
    load_hsv_frames,
    read_flo,
    save_hsv_frames,
    write_flo,
)
from nnseg.video_io import FrameSequence


class TestDenseFlow:
    def test_identity_frames(self):
        img = multi_octave_texture((48, 48), seed=1)
        f = dense_flow(img, img)
        assert np.hypot(f.u, f.v).max() <= 0.05

    def test_translation_recovered(self):
        img = multi_octave_texture((96, 96), seed=2)
        for dx, dy in [(2.0, 0.0), (0.7, -1.3), (4.0, 4.0), (-3.0, 2.0)]:
            f = dense_flow(img, subpixel_shift(img, dx, dy))
            err = np.hypot(f.u - dx, f.v - dy)
            assert np.median(err) <= 0.25

    def test_mirror_equivariance(self):
        img = multi_octave_texture((96, 96), seed=3)
        moved = subpixel_shift(img, 1.5, 0.8)
        f = dense_flow(img, moved)
        g = dense_flow(img[:, ::-1], moved[:, ::-1])
        assert np.median(np.abs(g.u[:, ::-1] + f.u)) <= 0.1
        assert np.median(np.abs(g.v[:, ::-1] - f.v)) <= 0.1

    def test_size_validation(self):
        with pytest.raises(ValueError, match="mismatch"):
            dense_flow(np.zeros((32, 32)), np.zeros((32, 33)))
        with pytest.raises(ValueError, match="small"):
            dense_flow(np.zeros((12, 12)), np.zeros((12, 12)))

    def test_param_validation(self):
        with pytest.raises(ValueError):
            FlowParams(levels=0)
        with pytest.raises(ValueError):
            FlowParams(poly_n=4)
        with pytest.raises(ValueError):
            FlowParams(scale=1.0)


class TestFlowToHsv:
    def test_zero_flow_is_black(self):
        hsv = flow_to_hsv(FlowField(np.zeros((8, 8)), np.zeros((8, 8))))
        assert hsv.shape == (8, 8, 3)
        np.testing.assert_array_equal(hsv[..., 2], 0.0)
        np.testing.assert_array_equal(hsv[..., 0], 0.0)

    def test_uniform_right_motion(self):
        hsv = flow_to_hsv(FlowField(np.full((4, 4), 2.0), np.zeros((4, 4))))
        np.testing.assert_allclose(hsv[..., 0], 0.0, atol=1e-6)
        np.testing.assert_allclose(hsv[..., 1], 1.0)
        np.testing.assert_allclose(hsv[..., 2], 1.0)

    def test_uniform_down_motion_hue_quarter(self):
        hsv = flow_to_hsv(FlowField(np.zeros((4, 4)), np.full((4, 4), 1.0)))
        np.testing.assert_allclose(hsv[..., 0], 0.25, atol=1e-6)
        np.testing.assert_allclose(hsv[..., 2], 1.0)

    def test_per_frame_norm_scale_invariant(self):
        rng = np.random.default_rng(0)
        u = rng.normal(size=(8, 8))
        v = rng.normal(size=(8, 8))
        a = flow_to_hsv(FlowField(u, v))
        b = flow_to_hsv(FlowField(3 * u, 3 * v))
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_fixed_norm_clips(self):
        hsv = flow_to_hsv(FlowField(np.full((4, 4), 10.0), np.zeros((4, 4))), max_mag=4.0)
        np.testing.assert_allclose(hsv[..., 2], 1.0)
        hsv = flow_to_hsv(FlowField(np.full((4, 4), 1.0), np.zeros((4, 4))), max_mag=4.0)
        np.testing.assert_allclose(hsv[..., 2], 0.25)

    def test_bad_max_mag_rejected(self):
        with pytest.raises(ValueError):
            flow_to_hsv(FlowField(np.zeros((4, 4)), np.zeros((4, 4))), max_mag=0.0)


class TestClipFlowEncode:
    def test_26_frames_give_25_fields(self):
        rng = np.random.default_rng(1)
        base = multi_octave_texture((32, 32), seed=4)
        frames = np.clip(base + rng.normal(0, 0.01, (26, 32, 32)), 0, 1)
        flows = clip_flow_encode(FrameSequence(frames.astype(np.float32), 10.0))
        assert len(flows.fields) == 25
        assert len(flows.hsv_frames) == 25

    def test_two_static_frames_one_black_hsv(self):
        base = multi_octave_texture((32, 32), seed=5)
        flows = clip_flow_encode(FrameSequence(np.stack([base, base]).astype(np.float32), 10.0))
        assert len(flows.hsv_frames) == 1
        np.testing.assert_array_equal(flows.hsv_frames[0][..., 2], 0.0)

    def test_constant_pan_constant_hue(self):
        base = multi_octave_texture((64, 64), seed=6)
        frames = [np.clip(subpixel_shift(base, 1.5 * k, 0.0), 0, 1) for k in range(5)]
        flows = clip_flow_encode(FrameSequence(np.stack(frames).astype(np.float32), 10.0), max_mag=4.0)
        for hsv in flows.hsv_frames:
            mask = hsv[..., 2] > 0.1
            hues = hsv[..., 0][mask]
            assert np.median(np.minimum(hues, 1 - hues)) <= 0.03  # hue ~ 0 (rightward)

    def test_oscillating_motion_alternates_direction(self):
        # global x position follows a 2 Hz sine at 10 fps; the median flow
        # direction must match the sign of the analytic displacement
        base = multi_octave_texture((48, 48), seed=7)
        amp, hz, fps = 2.0, 2.0, 10.0
        pos = [amp * np.sin(2 * np.pi * hz * k / fps) for k in range(12)]
        frames = [np.clip(subpixel_shift(base, p, 0.0), 0, 1) for p in pos]
        flows = clip_flow_encode(FrameSequence(np.stack(frames).astype(np.float32), fps))
        signs_seen = set()
        for k, fld in enumerate(flows.fields):
            expected = pos[k + 1] - pos[k]
            if abs(expected) > 0.3:
                med_u = float(np.median(fld.u))
                assert np.sign(med_u) == np.sign(expected)
                signs_seen.add(np.sign(expected))
        assert signs_seen == {-1.0, 1.0}

    def test_single_frame_rejected(self):
        with pytest.raises(ValueError):
            clip_flow_encode(FrameSequence(np.zeros((1, 32, 32), dtype=np.float32), 10.0))


class TestInterchange:
    def test_flo_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        fld = FlowField(rng.normal(size=(20, 30)), rng.normal(size=(20, 30)))
        path = tmp_path / "f.flo"
        write_flo(fld, path)
        with open(path, "rb") as fh:
            assert fh.read(4) == b"PIEH"
        back = read_flo(path)
        np.testing.assert_allclose(back.u, fld.u, atol=1e-6)
        np.testing.assert_allclose(back.v, fld.v, atol=1e-6)

    def test_bad_magic_rejected(self, tmp_path):
        (tmp_path / "x.flo").write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValueError, match="magic"):
            read_flo(tmp_path / "x.flo")

    def test_hsv_frames_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        base = multi_octave_texture((32, 32), seed=8)
        frames = np.clip(base + rng.normal(0, 0.02, (4, 32, 32)), 0, 1)
        flows = clip_flow_encode(FrameSequence(frames.astype(np.float32), 10.0), max_mag=4.0)
        save_hsv_frames(flows, tmp_path / "flow")
        loaded, fps = load_hsv_frames(tmp_path / "flow")
        assert fps == 10.0
        assert len(loaded) == 3
        for got, want in zip(loaded, flows.hsv_frames):
            np.testing.assert_allclose(got, want, atol=1 / 255 + 1e-6)
