"""Trajectory estimation, smoothing, stabilized face crops, and augmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .tracker import BoundingBox, BoxTrack, detect_corners, lk_track, propagate_bbox
from .video_io import FrameSequence


def estimate_trajectory(
    seq: FrameSequence,
    max_corners: int = 200,
    quality: float = 0.01,
    min_distance: float = 8.0,
    min_valid: int = 20,
) -> np.ndarray:
    """Cumulative (dx, dy) camera/subject motion per frame, shape (n, 2).

    Each frame-pair displacement is the coordinate-wise median of valid LK
    corner displacements.  Corners are carried along and re-detected whenever
    fewer than ``min_valid`` survive; a pair with no valid corners inherits
    the previous displacement.
    """
    if seq.n_frames < 2:
        raise ValueError("trajectory estimation needs at least 2 frames")
    steps = np.zeros((seq.n_frames - 1, 2))
    corners = detect_corners(seq.frame(0), max_corners, quality, min_distance)
    prev_delta = np.zeros(2)
    for k in range(seq.n_frames - 1):
        if len(corners) < min_valid:
            corners = detect_corners(seq.frame(k), max_corners, quality, min_distance)
        if len(corners) == 0:
            steps[k] = prev_delta
            continue
        tracked, status = lk_track(seq.frame(k), seq.frame(k + 1), corners)
        if status.any():
            deltas = tracked[status] - corners.points[status]
            steps[k] = np.median(deltas, axis=0)
            corners = type(corners)(tracked[status], corners.scores[status])
        else:
            steps[k] = prev_delta
            corners = type(corners)(np.empty((0, 2)), np.empty(0))
        prev_delta = steps[k]
    traj = np.zeros((seq.n_frames, 2))
    traj[1:] = np.cumsum(steps, axis=0)
    return traj


def smooth_trajectory(traj: np.ndarray, window_s: float, fps: float) -> np.ndarray:
    """Centered moving average over round(window_s * fps) frames (forced odd).

    Edges use the average of whatever entries fall inside the window, so a
    window longer than the sequence degenerates to the global mean.
    """
    if window_s <= 0:
        raise ValueError("window_s must be positive")
    traj = np.asarray(traj, dtype=np.float64)
    n = len(traj)
    win = int(round(window_s * fps))
    if win % 2 == 0:
        win += 1
    win = max(win, 1)
    half = win // 2
    out = np.empty_like(traj)
    csum = np.vstack([np.zeros((1, traj.shape[1])), np.cumsum(traj, axis=0)])
    for i in range(n):
        lo = max(0, i - half)
        hi = min(n, i + half + 1)
        out[i] = (csum[hi] - csum[lo]) / (hi - lo)
    return out


def _crop_resize(img: np.ndarray, box: BoundingBox, out_size: int) -> np.ndarray:
    """Bilinear resample of the (float-coordinate) box region to out_size^2."""
    xs = box.x + (np.arange(out_size) + 0.5) * box.w / out_size - 0.5
    ys = box.y + (np.arange(out_size) + 0.5) * box.h / out_size - 0.5
    cy, cx = np.meshgrid(ys, xs, indexing="ij")
    out = ndimage.map_coordinates(img.astype(np.float64), [cy, cx], order=1, mode="nearest")
    return np.clip(out, 0.0, 1.0)


def stabilized_crop(
    seq: FrameSequence,
    track: BoxTrack,
    margin: float = 0.1,
    out_size: int = 112,
) -> FrameSequence:
    """Crop every frame to its stabilization-corrected box, resized square.

    Each box is displaced by (smoothed - raw) trajectory, grown by ``margin``
    per side, clamped into the frame, and bilinearly resampled to
    ``out_size`` x ``out_size``.
    """
    if out_size < 8:
        raise ValueError("out_size must be at least 8")
    if len(track) != seq.n_frames:
        raise ValueError(f"track covers {len(track)} frames, video has {seq.n_frames}")
    if track.trajectory is not None and track.smoothed is not None:
        correction = np.asarray(track.smoothed) - np.asarray(track.trajectory)
    else:
        correction = np.zeros((seq.n_frames, 2))
    frames = np.empty((seq.n_frames, out_size, out_size), dtype=np.float32)
    for i, box in enumerate(track.boxes):
        b = box.shifted(correction[i, 0], correction[i, 1])
        grow_x, grow_y = margin * b.w, margin * b.h
        b = BoundingBox(b.x - grow_x, b.y - grow_y, b.w + 2 * grow_x, b.h + 2 * grow_y)
        b = b.clamped(seq.width, seq.height)
        frames[i] = _crop_resize(seq.pixels[i], b, out_size)
    return FrameSequence(frames, seq.fps)


def build_box_track(
    seq: FrameSequence,
    detections: dict[int, BoundingBox],
    smooth_window_s: float = 1.5,
    **mosse_kwargs,
) -> BoxTrack:
    """propagate_bbox + trajectory estimation + smoothing, in one call."""
    track = propagate_bbox(seq, detections, **mosse_kwargs)
    track.trajectory = estimate_trajectory(seq)
    track.smoothed = smooth_trajectory(track.trajectory, smooth_window_s, seq.fps)
    return track


@dataclass(frozen=True)
class AugmentParams:
    """Per-clip augmentation draw: one rotation, scale and flip for all frames."""

    rotation_deg: float = 15.0
    scale_range: tuple[float, float] = (0.9, 1.1)
    flip_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.rotation_deg < 0:
            raise ValueError("rotation_deg must be non-negative")
        if not (0 < self.scale_range[0] <= self.scale_range[1]):
            raise ValueError("scale_range must be positive and ordered")
        if not (0 <= self.flip_prob <= 1):
            raise ValueError("flip_prob must be in [0, 1]")


def augment(seq: FrameSequence, params: AugmentParams) -> FrameSequence:
    """Apply one random rotation/scale/flip identically to every frame.

    The draw is fully determined by ``params.seed``, so the same parameters
    always produce bit-identical output.
    """
    rng = np.random.default_rng(params.seed)
    angle = rng.uniform(-params.rotation_deg, params.rotation_deg) * np.pi / 180.0
    scale = rng.uniform(params.scale_range[0], params.scale_range[1])
    flip = rng.random() < params.flip_prob

    pixels = seq.pixels
    if angle != 0.0 or scale != 1.0:
        c, s = np.cos(angle) / scale, np.sin(angle) / scale
        mat = np.array([[c, -s], [s, c]])
        center = (np.array(pixels.shape[1:]) - 1) / 2.0
        offset = center - mat @ center
        warped = np.empty_like(pixels)
        for i in range(len(pixels)):
            warped[i] = ndimage.affine_transform(
                pixels[i].astype(np.float64), mat, offset=offset, order=1, mode="nearest"
            )
        pixels = np.clip(warped, 0.0, 1.0)
    if flip:
        pixels = pixels[:, :, ::-1]
    return FrameSequence(np.ascontiguousarray(pixels), seq.fps)
