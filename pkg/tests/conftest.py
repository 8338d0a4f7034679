"""Shared fixtures: synthetic textures, warped frames, and a trained baseline.

The expensive artifacts (flow-encoded synthetic videos, the trained spectral
baseline) are session-scoped so the unit suite and the acceptance suite share
one build.
"""

import time

import numpy as np
import pytest
from scipy import ndimage

from nnseg.classifier import Window, extract_features, train_baseline
from nnseg.optical_flow import clip_flow_encode
from nnseg.synth import SynthSpec, generate_video

FPS = 10.0
HSV_MAX_MAG = 4.0

#: wall-clock seconds spent building each session fixture, keyed by name
FIXTURE_SECONDS: dict[str, float] = {}


def multi_octave_texture(shape, seed, scales=(6, 12, 24), amps=(1.0, 0.5, 0.25)):
    """Broad-spectrum value noise; enough structure at every pyramid level."""
    rng = np.random.default_rng(seed)
    out = np.zeros(shape)
    for cells, amp in zip(scales, amps):
        grid = rng.standard_normal((cells + 1, cells + 1))
        out += amp * ndimage.zoom(grid, (shape[0] / grid.shape[0], shape[1] / grid.shape[1]), order=3)
    out -= out.min()
    out /= out.max()
    return out


def subpixel_shift(img, dx, dy):
    """Translate an image by a (possibly fractional) offset, edge-replicated."""
    sm = ndimage.spline_filter(img, order=3, mode="nearest")
    yy, xx = np.mgrid[0 : img.shape[0], 0 : img.shape[1]].astype(float)
    return ndimage.map_coordinates(sm, [yy - dy, xx - dx], order=3, prefilter=False, mode="nearest")


def windows_at(hsv_frames, starts, source="fixture"):
    return [
        Window(np.stack(hsv_frames[int(round(s * FPS)) : int(round(s * FPS)) + 25]), source, s)
        for s in starts
    ]


def positive_starts(ann, limit, step=0.13):
    starts = []
    for ev in ann.events:
        t = ev.start_s
        while t + 2.6 <= ev.end_s + 1e-9 and len(starts) < limit:
            starts.append(round(t, 3))
            t = round(t + step, 3)
    return starts


def quiet_starts(ann, duration, limit, step=0.5):
    starts = []
    t = 0.0
    while t + 2.6 <= duration and len(starts) < limit:
        if not any(ev.start_s < t + 2.6 and ev.end_s > t for ev in ann.events):
            starts.append(round(t, 3))
        t = round(t + step, 3)
    return starts


def burst_training_video(seed, amplitude):
    spec = SynthSpec(
        duration_s=60.0,
        frame_size=64,
        bursts=[round(1.037 + 8.13 * k, 3) for k in range(7)],
        sucks_min=8,
        sucks_max=8,
        suck_amplitude_px=amplitude,
        noise_std=0.003,
        seed=seed,
    )
    return generate_video(spec)


def quiet_training_video(seed, jitter, noise, duration=22.0):
    spec = SynthSpec(
        duration_s=duration,
        frame_size=64,
        bursts=[],
        jitter_std_px=jitter,
        noise_std=noise,
        seed=seed,
    )
    return generate_video(spec)


def encode(seq):
    return clip_flow_encode(seq, max_mag=HSV_MAX_MAG).hsv_frames


@pytest.fixture(scope="session")
def training_windows():
    """100 burst windows and 100 quiet (static/drift) windows."""
    t0 = time.monotonic()
    pos, neg = [], []
    for seed, amp in ((1, 2.0), (6, 1.6)):
        seq, ann = burst_training_video(seed, amp)
        hsv = encode(seq)
        pos += windows_at(hsv, positive_starts(ann, 50))
        neg += windows_at(hsv, quiet_starts(ann, seq.duration_s, 30))
    for seed, jitter, noise in ((3, 0.3, 0.003), (4, 0.0, 0.006)):
        seq, ann = quiet_training_video(seed, jitter, noise)
        hsv = encode(seq)
        neg += windows_at(hsv, quiet_starts(ann, seq.duration_s, 25))
    assert len(pos) == 100 and len(neg) >= 100
    FIXTURE_SECONDS["training_windows"] = time.monotonic() - t0
    return pos, neg[:100]


@pytest.fixture(scope="session")
def test_windows():
    """Disjoint 100-window evaluation set (50 bursts, 50 static/drift)."""
    t0 = time.monotonic()
    seq, ann = burst_training_video(40, 2.0)
    pos = windows_at(encode(seq), positive_starts(ann, 50))
    neg = []
    for seed, jitter, noise in ((41, 0.0, 0.003), (42, 0.2, 0.005)):
        seq, ann = quiet_training_video(seed, jitter, noise)
        neg += windows_at(encode(seq), quiet_starts(ann, seq.duration_s, 25))
    assert len(pos) == 50 and len(neg) >= 50
    FIXTURE_SECONDS["test_windows"] = time.monotonic() - t0
    return pos, neg[:50]


@pytest.fixture(scope="session")
def baseline_model(training_windows):
    t0 = time.monotonic()
    pos, neg = training_windows
    X = np.array([extract_features(w) for w in pos + neg])
    y = np.array([1] * len(pos) + [0] * len(neg))
    model = train_baseline(X, y, lr=0.5, epochs=800, l2=1e-4)
    FIXTURE_SECONDS["baseline_model"] = time.monotonic() - t0
    return model
