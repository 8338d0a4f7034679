"""Synthetic infant-like test videos with known sucking bursts.

A static value-noise background with a textured face region is warped per
frame by (a) a global random-walk jitter and (b) a localized mouth
displacement, one sinusoidal sweep per suck, whose speed pulses at the suck
frequency so the mean flow magnitude inside a burst carries its dominant
spectral line there.  Ground-truth annotations mark one nns event per burst
with exact extents.  Everything is deterministic per seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .annotations import AnnotationSet
from .segmenter import Event
from .tracker import BoundingBox
from .video_io import FrameSequence


@dataclass
class SynthSpec:
    duration_s: float
    fps: float = 10.0
    frame_size: int = 96
    face_box: tuple[float, float, float, float] | None = None
    suck_hz: float = 2.0
    suck_amplitude_px: float = 2.0
    sucks_min: int = 6
    sucks_max: int = 12
    bursts: list[float] | None = None
    burst_rate_per_min: float | None = None
    jitter_std_px: float = 0.0
    noise_std: float = 0.005
    seed: int = 0

    def __post_init__(self):
        if self.duration_s <= 0 or self.fps <= 0:
            raise ValueError("duration_s and fps must be positive")
        if not self.suck_hz < self.fps / 2:
            raise ValueError(
                f"suck frequency {self.suck_hz} Hz violates Nyquist at {self.fps} fps"
            )
        if self.suck_amplitude_px < 0:
            raise ValueError("suck amplitude must be non-negative")
        if not (1 <= self.sucks_min <= self.sucks_max):
            raise ValueError("need 1 <= sucks_min <= sucks_max")
        if self.frame_size < 32:
            raise ValueError("frame_size must be at least 32")

    @property
    def face(self) -> BoundingBox:
        if self.face_box is not None:
            return BoundingBox(*self.face_box)
        s = self.frame_size
        return BoundingBox(s * 0.25, s * 0.25, s * 0.5, s * 0.5)


def _value_noise(shape: tuple[int, int], rng, scales=(6, 12, 24, 48), amps=(1.0, 0.5, 0.25, 0.12)):
    out = np.zeros(shape)
    for cells, amp in zip(scales, amps):
        grid = rng.standard_normal((cells + 1, cells + 1))
        out += amp * ndimage.zoom(grid, (shape[0] / grid.shape[0], shape[1] / grid.shape[1]), order=3)
    out -= out.min()
    peak = out.max()
    if peak > 0:
        out /= peak
    return out


def _base_image(spec: SynthSpec, rng) -> np.ndarray:
    size = spec.frame_size
    img = 0.25 + 0.5 * _value_noise((size, size), rng)
    face = spec.face
    x0, y0 = int(face.x), int(face.y)
    x1, y1 = int(face.x + face.w), int(face.y + face.h)
    detail = _value_noise((y1 - y0, x1 - x0), rng, scales=(8, 16, 32), amps=(1.0, 0.6, 0.3))
    img[y0:y1, x0:x1] = 0.2 + 0.6 * detail
    img[y0 : y0 + 2, x0:x1] = 0.9
    img[y1 - 2 : y1, x0:x1] = 0.9
    img[y0:y1, x0 : x0 + 2] = 0.9
    img[y0:y1, x1 - 2 : x1] = 0.9
    return np.clip(img, 0.0, 1.0)


def suck_offset(t_in_burst: float, hz: float, amplitude: float) -> float:
    """Mouth displacement at time t after burst onset.

    The mouth sweeps sinusoidally with one sweep per suck (a full position
    cycle spans two sucks), so the motion speed pulses at ``hz`` itself and
    the mean flow magnitude inside a burst has its dominant spectral line at
    the suck frequency regardless of how the burst aligns with the frame
    grid.  The offset is 0 at both burst ends, keeping the video continuous.
    """
    return amplitude * float(np.sin(np.pi * hz * t_in_burst))


def _burst_schedule(spec: SynthSpec, rng) -> list[tuple[float, float]]:
    """(start_s, duration_s) per burst; draws suck counts, validates extents."""
    out = []
    if spec.bursts is not None:
        starts = list(spec.bursts)
    elif spec.burst_rate_per_min is not None:
        target = max(0, int(round(spec.burst_rate_per_min * spec.duration_s / 60.0)))
        starts = []
        max_len = spec.sucks_max / spec.suck_hz
        for _ in range(2000):
            if len(starts) >= target:
                break
            cand = float(rng.uniform(0.0, max(0.0, spec.duration_s - max_len)))
            if all(abs(cand - s) > max_len + 1.0 for s in starts):
                starts.append(cand)
        starts.sort()
    else:
        starts = []
    for s in starts:
        n_sucks = int(rng.integers(spec.sucks_min, spec.sucks_max + 1))
        dur = n_sucks / spec.suck_hz
        if s < 0 or s + dur > spec.duration_s + 1e-9:
            raise ValueError(f"burst at {s}s (len {dur}s) falls outside the video")
        out.append((round(s, 3), round(dur, 3)))
    out.sort()
    for (s0, d0), (s1, _) in zip(out, out[1:]):
        if s1 < s0 + d0:
            raise ValueError(f"bursts at {s0}s and {s1}s overlap")
    return out


def generate_video(spec: SynthSpec) -> tuple[FrameSequence, AnnotationSet]:
    """Render the synthetic video and its ground-truth annotation set."""
    rng = np.random.default_rng(spec.seed)
    base = _base_image(spec, rng)
    bursts = _burst_schedule(spec, rng)

    n = int(round(spec.duration_s * spec.fps))
    size = spec.frame_size
    face = spec.face

    # Mouth envelope: smooth bump over the lower-middle of the face.
    mouth_cx = face.x + face.w / 2.0
    mouth_cy = face.y + face.h * 0.72
    sig_x = face.w * 0.16
    sig_y = face.h * 0.10
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    envelope = np.exp(
        -((xx - mouth_cx) ** 2) / (2 * sig_x**2) - ((yy - mouth_cy) ** 2) / (2 * sig_y**2)
    )

    jitter = np.zeros((n, 2))
    if spec.jitter_std_px > 0:
        steps = rng.normal(0.0, spec.jitter_std_px, size=(n - 1, 2))
        jitter[1:] = np.cumsum(steps, axis=0)

    smooth_base = ndimage.spline_filter(base, order=3, mode="nearest")
    frames = np.empty((n, size, size), dtype=np.float32)
    for k in range(n):
        t = k / spec.fps
        mouth = 0.0
        for s, d in bursts:
            if s <= t < s + d:
                mouth = suck_offset(t - s, spec.suck_hz, spec.suck_amplitude_px)
                break
        dx = jitter[k, 0]
        dy = jitter[k, 1] + mouth * envelope
        coords = [yy - dy, xx - dx]
        warped = ndimage.map_coordinates(smooth_base, coords, order=3, prefilter=False, mode="nearest")
        if spec.noise_std > 0:
            warped = warped + rng.normal(0.0, spec.noise_std, size=warped.shape)
        frames[k] = np.clip(warped, 0.0, 1.0)

    events = [
        Event(start_s=s, end_s=round(s + d, 3), label="nns", confidence=1.0) for s, d in bursts
    ]
    ann = AnnotationSet(
        subject=f"synth{spec.seed}",
        coder="synth",
        duration_s=spec.duration_s,
        events=events,
    )
    return FrameSequence(frames, spec.fps), ann


# ---------------------------------------------------------------------------
# flat key=value spec files (CLI surface)

_FLOAT_KEYS = {
    "duration_s",
    "fps",
    "suck_hz",
    "suck_amplitude_px",
    "burst_rate_per_min",
    "jitter_std_px",
    "noise_std",
}
_INT_KEYS = {"frame_size", "sucks_min", "sucks_max", "seed"}


def read_spec_file(path) -> SynthSpec:
    kwargs: dict = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"malformed spec line: {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key in _FLOAT_KEYS:
            kwargs[key] = float(value)
        elif key in _INT_KEYS:
            kwargs[key] = int(value)
        elif key == "bursts":
            kwargs[key] = [float(v) for v in value.split(",") if v.strip()]
        elif key == "face_box":
            parts = [float(v) for v in value.split(",")]
            if len(parts) != 4:
                raise ValueError("face_box needs x,y,w,h")
            kwargs[key] = tuple(parts)
        else:
            raise ValueError(f"unknown spec key {key!r}")
    if "duration_s" not in kwargs:
        raise ValueError("spec file must define duration_s")
    return SynthSpec(**kwargs)
