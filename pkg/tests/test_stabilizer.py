import numpy as np
import pytest

from conftest import multi_octave_texture, subpixel_shift
from nnseg.stabilizer import (
    AugmentParams,
    augment,
    build_box_track,
    estimate_trajectory,
    smooth_trajectory,
    stabilized_crop,
)
from nnseg.synth import SynthSpec, generate_video
from nnseg.tracker import BoundingBox, BoxTrack
from nnseg.video_io import FrameSequence


def shifted_sequence(offsets, seed=1, size=96):
    base = multi_octave_texture((size, size), seed=seed)
    frames = [np.clip(subpixel_shift(base, dx, dy), 0, 1) for dx, dy in offsets]
    return FrameSequence(np.stack(frames).astype(np.float32), 10.0)


class TestEstimateTrajectory:
    def test_static_video(self):
        seq = shifted_sequence([(0, 0)] * 6)
        traj = estimate_trajectory(seq)
        assert np.abs(traj).max() <= 0.1

    def test_constant_drift(self):
        seq = shifted_sequence([(k * 1.0, 0.0) for k in range(10)])
        traj = estimate_trajectory(seq)
        assert traj[0].tolist() == [0.0, 0.0]
        assert abs(traj[-1, 0] - 9.0) <= 0.3
        assert abs(traj[-1, 1]) <= 0.3

    def test_alternating_jitter(self):
        seq = shifted_sequence([(0, 0), (2, 0), (0, 0), (2, 0), (0, 0), (2, 0)])
        traj = estimate_trajectory(seq)
        xs = traj[:, 0]
        assert np.allclose(xs[::2], 0.0, atol=0.35)
        assert np.allclose(xs[1::2], 2.0, atol=0.35)

    def test_single_frame_rejected(self):
        with pytest.raises(ValueError):
            estimate_trajectory(shifted_sequence([(0, 0)]))


class TestSmoothTrajectory:
    def test_constant_unchanged(self):
        traj = np.tile([3.0, -1.0], (9, 1))
        np.testing.assert_allclose(smooth_trajectory(traj, 0.5, 10.0), traj)

    def test_hand_moving_average(self):
        traj = np.array([[0.0], [2.0], [0.0], [2.0], [0.0]])
        out = smooth_trajectory(traj, 0.3, 10.0)  # 3-frame window
        np.testing.assert_allclose(out[:, 0], [1.0, 2 / 3, 4 / 3, 2 / 3, 1.0])

    def test_window_longer_than_sequence_gives_global_mean(self):
        traj = np.array([[0.0], [1.0], [5.0]])
        out = smooth_trajectory(traj, 10.0, 10.0)
        np.testing.assert_allclose(out[:, 0], [2.0, 2.0, 2.0])

    def test_window_must_be_positive(self):
        with pytest.raises(ValueError):
            smooth_trajectory(np.zeros((4, 2)), 0.0, 10.0)


class TestStabilizedCrop:
    def test_output_size_fixed_even_when_clamped(self):
        seq = shifted_sequence([(0, 0)] * 3)
        boxes = [BoundingBox(80, 80, 30, 30)] * 3  # partially outside 96x96
        out = stabilized_crop(seq, BoxTrack(boxes=boxes), out_size=48)
        assert out.pixels.shape == (3, 48, 48)

    def test_zero_jitter_margin_zero_is_plain_crop(self):
        seq = shifted_sequence([(0, 0)] * 2)
        box = BoundingBox(20, 24, 32, 32)
        track = BoxTrack(boxes=[box, box], trajectory=np.zeros((2, 2)), smoothed=np.zeros((2, 2)))
        out = stabilized_crop(seq, track, margin=0.0, out_size=32)
        np.testing.assert_allclose(out.pixels[0], seq.pixels[0, 24:56, 20:52], atol=1e-4)

    def test_small_output_rejected(self):
        seq = shifted_sequence([(0, 0)] * 2)
        with pytest.raises(ValueError):
            stabilized_crop(seq, BoxTrack(boxes=[BoundingBox(0, 0, 8, 8)] * 2), out_size=4)

    def test_track_length_mismatch_rejected(self):
        seq = shifted_sequence([(0, 0)] * 3)
        with pytest.raises(ValueError):
            stabilized_crop(seq, BoxTrack(boxes=[BoundingBox(0, 0, 8, 8)] * 2))

    def test_full_pipeline_reduces_jitter(self):
        # MOSSE + trajectory smoothing end to end on a random-walk jitter video
        spec = SynthSpec(
            duration_s=30.0, frame_size=64, bursts=[], jitter_std_px=0.3, noise_std=0.003, seed=21
        )
        seq, _ = generate_video(spec)
        track = build_box_track(seq, {0: spec.face})
        out = stabilized_crop(seq, track, margin=0.1, out_size=64)
        scale = 1.2 * spec.face.w / 64  # output px back to input px
        res = estimate_trajectory(out) * scale

        def wander(traj):
            c = traj - traj.mean(axis=0)
            return float(np.sqrt((c**2).sum(axis=1).mean()))

        assert wander(res) <= 0.4 * wander(track.trajectory)


class TestAugment:
    def make(self, n=4):
        rng = np.random.default_rng(0)
        return FrameSequence(rng.random((n, 24, 24)).astype(np.float32), 10.0)

    def test_identity_params(self):
        seq = self.make()
        out = augment(seq, AugmentParams(rotation_deg=0.0, scale_range=(1.0, 1.0), flip_prob=0.0))
        np.testing.assert_array_equal(out.pixels, seq.pixels)

    def test_flip_is_involution(self):
        seq = self.make()
        p = AugmentParams(rotation_deg=0.0, scale_range=(1.0, 1.0), flip_prob=1.0, seed=3)
        once = augment(seq, p)
        np.testing.assert_array_equal(once.pixels, seq.pixels[:, :, ::-1])
        np.testing.assert_array_equal(augment(once, p).pixels, seq.pixels)

    def test_same_seed_bit_identical(self):
        seq = self.make()
        p = AugmentParams(seed=11)
        a = augment(seq, p)
        b = augment(seq, p)
        np.testing.assert_array_equal(a.pixels, b.pixels)

    def test_transform_consistent_across_frames(self):
        # every frame gets the same warp: warping frame k alone must equal
        # frame k of the warped clip
        seq = self.make()
        p = AugmentParams(seed=5)
        out = augment(seq, p)
        single = augment(FrameSequence(seq.pixels[2:3], seq.fps), p)
        np.testing.assert_allclose(out.pixels[2], single.pixels[0], atol=1e-6)

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            AugmentParams(rotation_deg=-1.0)
        with pytest.raises(ValueError):
            AugmentParams(scale_range=(1.1, 0.9))
        with pytest.raises(ValueError):
            AugmentParams(flip_prob=1.5)
