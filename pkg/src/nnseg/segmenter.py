"""Long-video segmentation: window covers, score aggregation, event extraction.

Three aggregation configurations convert per-window scores into a per-segment
label track:

* tiled: non-overlapping 2.5 s windows; each window's thresholded score
  labels its own extent (2.5 s resolution).
* sliding: 2.5 s windows every 0.5 s; each window's thresholded score labels
  only its central 0.5 s segment.
* smoothed: like sliding but the raw scores are assigned first, a centered
  2.5 s moving average runs over the segment scores, and thresholding happens
  after smoothing.

Segments never covered by an assignment (the first/last second in the
sliding configurations, or a dropped partial tail window in tiled) inherit
the value of the nearest covered segment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .classifier import Window, WindowScore, classify_window
from .optical_flow import FlowParams, clip_flow_encode
from .video_io import FrameSequence

MODES = ("tiled", "sliding", "smoothed")


@dataclass(frozen=True)
class WindowSpec:
    """A scoring window and the segment its outcome is assigned to."""

    start_s: float
    end_s: float
    assign_start_s: float
    assign_end_s: float


@dataclass
class SegmentTrack:
    """Fixed-resolution per-segment scores and binary labels for one source."""

    resolution_s: float
    scores: np.ndarray
    labels: np.ndarray
    duration_s: float
    source: str = ""

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=bool)
        expected = max(1, math.ceil(self.duration_s / self.resolution_s - 1e-9))
        if len(self.scores) != expected or len(self.labels) != expected:
            raise ValueError(
                f"track length {len(self.scores)} != ceil(duration/resolution) = {expected}"
            )


@dataclass
class Event:
    """A labeled time interval; confidence is the mean segment score inside."""

    start_s: float
    end_s: float
    label: str = "nns"
    confidence: float = 1.0

    def __post_init__(self):
        if not self.start_s < self.end_s:
            raise ValueError(f"event must have start < end, got [{self.start_s}, {self.end_s}]")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass
class SegmentConfig:
    """Knobs for the full segmentation pipeline."""

    mode: str = "smoothed"
    threshold: float = 0.5
    window_s: float = 2.5
    stride_s: float = 0.5
    min_dur_s: float = 0.5
    merge_gap_s: float = 0.0
    hsv_max_mag: float = 4.0
    flow: FlowParams = field(default_factory=FlowParams)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (0.0 <= self.threshold <= 1.0):
            raise ValueError("threshold must be in [0, 1]")


def cover_windows(
    duration_s: float,
    mode: str,
    window_s: float = 2.5,
    stride_s: float = 0.5,
) -> list[WindowSpec]:
    """Window cover of [0, duration): tiled partition or sliding windows.

    Tiled windows assign their whole extent and a final partial window is
    dropped.  Sliding windows assign their central ``stride_s`` segment.
    """
    if mode not in ("tiled", "sliding", "smoothed"):
        raise ValueError(f"unknown cover mode {mode!r}")
    if duration_s < window_s - 1e-9:
        raise ValueError(f"duration {duration_s}s is shorter than one window ({window_s}s)")
    specs = []
    if mode == "tiled":
        n = int(math.floor(duration_s / window_s + 1e-9))
        for k in range(n):
            start = round(k * window_s, 3)
            end = round(start + window_s, 3)
            specs.append(WindowSpec(start, end, start, end))
    else:
        n = int(math.floor((duration_s - window_s) / stride_s + 1e-9)) + 1
        mid_off = (window_s - stride_s) / 2.0
        for k in range(n):
            start = round(k * stride_s, 3)
            a0 = round(start + mid_off, 3)
            specs.append(WindowSpec(start, round(start + window_s, 3), a0, round(a0 + stride_s, 3)))
    return specs


def _nearest_fill(values: np.ndarray, covered: np.ndarray) -> np.ndarray:
    """Fill uncovered entries with the nearest covered value (ties go left)."""
    idx = np.nonzero(covered)[0]
    if len(idx) == 0:
        raise ValueError("no covered segments to inherit from")
    out = values.copy()
    all_idx = np.arange(len(values))
    pos = np.searchsorted(idx, all_idx)
    left = idx[np.clip(pos - 1, 0, len(idx) - 1)]
    right = idx[np.clip(pos, 0, len(idx) - 1)]
    nearest = np.where(all_idx - left <= right - all_idx, left, right)
    out[~covered] = values[nearest[~covered]]
    return out


def _moving_average(x: np.ndarray, win: int) -> np.ndarray:
    half = win // 2
    csum = np.concatenate([[0.0], np.cumsum(x)])
    n = len(x)
    lo = np.maximum(0, np.arange(n) - half)
    hi = np.minimum(n, np.arange(n) + half + 1)
    return (csum[hi] - csum[lo]) / (hi - lo)


def aggregate(
    scores: list[WindowScore],
    mode: str,
    threshold: float,
    duration_s: float,
    window_s: float = 2.5,
    stride_s: float = 0.5,
) -> SegmentTrack:
    """Turn window scores into a per-segment label track for one mode.

    ``scores`` must line up one-to-one with ``cover_windows`` for the mode
    (smoothed uses the sliding cover).  Thresholding uses >=, so a score equal
    to the threshold is positive.
    """
    specs = cover_windows(duration_s, mode, window_s, stride_s)
    ordered = sorted(scores, key=lambda s: s.start_s)
    if len(ordered) != len(specs):
        raise ValueError(f"got {len(ordered)} scores for {len(specs)} windows in {mode} mode")
    for sc, spec in zip(ordered, specs):
        if abs(sc.start_s - spec.start_s) > 1e-6:
            raise ValueError(
                f"score at {sc.start_s}s does not match expected window start {spec.start_s}s"
            )
    source = ordered[0].source if ordered else ""

    resolution = window_s if mode == "tiled" else stride_s
    n_seg = max(1, math.ceil(duration_s / resolution - 1e-9))
    seg_scores = np.zeros(n_seg)
    covered = np.zeros(n_seg, dtype=bool)
    for sc, spec in zip(ordered, specs):
        i = int(round(spec.assign_start_s / resolution))
        seg_scores[i] = sc.score
        covered[i] = True

    if mode == "smoothed":
        win = int(round(window_s / stride_s))
        if win % 2 == 0:
            win += 1
        idx = np.nonzero(covered)[0]
        smoothed = seg_scores.copy()
        smoothed[idx[0] : idx[-1] + 1] = _moving_average(seg_scores[idx[0] : idx[-1] + 1], win)
        seg_scores = smoothed
    seg_labels = seg_scores >= threshold - 1e-12
    seg_scores = _nearest_fill(seg_scores, covered)
    seg_labels = _nearest_fill(seg_labels, covered)
    return SegmentTrack(
        resolution_s=resolution,
        scores=seg_scores,
        labels=seg_labels,
        duration_s=duration_s,
        source=source,
    )


def extract_events(
    track: SegmentTrack,
    min_dur_s: float = 0.5,
    merge_gap_s: float = 0.0,
) -> list[Event]:
    """Maximal positive runs as events, with gap merging and length filtering.

    Events separated by gaps strictly shorter than ``merge_gap_s`` are merged;
    events shorter than ``min_dur_s`` are then discarded.  Confidence is the
    mean segment score across the event extent (merged gaps included).
    """
    res = track.resolution_s
    labels = track.labels
    runs: list[tuple[int, int]] = []
    start = None
    for i, lab in enumerate(labels):
        if lab and start is None:
            start = i
        elif not lab and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(labels)))

    merged: list[tuple[int, int]] = []
    for lo, hi in runs:
        if merged and (lo - merged[-1][1]) * res < merge_gap_s - 1e-9:
            merged[-1] = (merged[-1][0], hi)
        else:
            merged.append((lo, hi))

    events = []
    for lo, hi in merged:
        start_s = round(lo * res, 3)
        end_s = round(min(track.duration_s, hi * res), 3)
        if end_s - start_s < min_dur_s - 1e-9:
            continue
        conf = float(np.clip(track.scores[lo:hi].mean(), 0.0, 1.0))
        events.append(Event(start_s=start_s, end_s=end_s, label="nns", confidence=conf))
    return events


def windows_from_flow(
    hsv_frames: list[np.ndarray],
    fps: float,
    duration_s: float,
    source: str,
    mode: str,
    window_s: float = 2.5,
    stride_s: float = 0.5,
) -> list[Window]:
    """Slice the per-video HSV flow stack into cover windows.

    A window spans round(window_s*fps)+1 video frames (both ends inclusive),
    so it consumes round(window_s*fps) flow frames.
    """
    fields_per_window = int(round(window_s * fps))
    stride_frames = stride_s * fps
    if abs(stride_frames - round(stride_frames)) > 1e-6:
        raise ValueError(f"stride {stride_s}s is not a whole number of frames at {fps} fps")
    specs = cover_windows(duration_s, mode, window_s, stride_s)
    out = []
    for spec in specs:
        i0 = int(round(spec.start_s * fps))
        fields = hsv_frames[i0 : i0 + fields_per_window]
        if len(fields) != fields_per_window:
            raise ValueError(f"window at {spec.start_s}s runs past the available flow frames")
        out.append(
            Window(np.stack(fields), source=source, start_s=spec.start_s, fps=fps, window_s=window_s)
        )
    return out


def segment_video(
    seq: FrameSequence,
    backend,
    config: SegmentConfig | None = None,
    source: str = "video",
) -> tuple[list[Event], SegmentTrack]:
    """Full pipeline on a frame sequence: flow, window scores, events.

    Windows cover the span between the first and last frame timestamps,
    (n-1)/fps seconds, since a window needs frames at both of its ends.
    """
    config = config or SegmentConfig()
    flows = clip_flow_encode(seq, config.flow, max_mag=config.hsv_max_mag)
    duration = round((seq.n_frames - 1) / seq.fps, 3)
    windows = windows_from_flow(
        flows.hsv_frames, seq.fps, duration, source, config.mode, config.window_s, config.stride_s
    )
    scores = [classify_window(backend, w) for w in windows]
    track = aggregate(scores, config.mode, config.threshold, duration, config.window_s, config.stride_s)
    events = extract_events(track, config.min_dur_s, config.merge_gap_s)
    return events, track


def segment_scores(
    backend,
    source: str,
    duration_s: float,
    config: SegmentConfig | None = None,
) -> tuple[list[Event], SegmentTrack]:
    """Segmentation driven purely by a score backend (no pixel data needed)."""
    config = config or SegmentConfig()
    specs = cover_windows(duration_s, config.mode, config.window_s, config.stride_s)
    scores = [
        classify_window(backend, Window(None, source=source, start_s=spec.start_s, window_s=config.window_s))
        for spec in specs
    ]
    track = aggregate(scores, config.mode, config.threshold, duration_s, config.window_s, config.stride_s)
    events = extract_events(track, config.min_dur_s, config.merge_gap_s)
    return events, track


# ---------------------------------------------------------------------------
# event CSV and SVG timeline interchange


def write_events(events_by_source: dict[str, list[Event]], path, header_comment: str | None = None) -> None:
    """Event CSV: header ``source,start_s,end_s,label,confidence``."""
    import csv

    with open(path, "w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        w = csv.writer(f)
        w.writerow(["source", "start_s", "end_s", "label", "confidence"])
        for source in sorted(events_by_source):
            for ev in sorted(events_by_source[source], key=lambda e: e.start_s):
                w.writerow(
                    [source, f"{ev.start_s:.3f}", f"{ev.end_s:.3f}", ev.label, f"{ev.confidence:.6f}"]
                )


def read_events(path) -> dict[str, list[Event]]:
    import csv

    with open(path, newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["source", "start_s", "end_s", "label", "confidence"]:
        raise ValueError(f"bad event CSV header in {path}: {header}")
    out: dict[str, list[Event]] = {}
    for row in reader:
        if not row:
            continue
        if len(row) != 5:
            raise ValueError(f"malformed event row in {path}: {row}")
        out.setdefault(row[0], []).append(
            Event(start_s=float(row[1]), end_s=float(row[2]), label=row[3], confidence=float(row[4]))
        )
    return out


def render_timeline_svg(
    per_source: dict[str, tuple[list[Event], list[Event]]],
    path,
    px_per_s: float = 10.0,
) -> None:
    """One lane per source with ground truth drawn above predictions.

    The horizontal scale is 1 px per 0.1 s by default.
    """
    lane_h = 34
    bar_h = 10
    label_w = 120
    duration = 0.0
    for gt, pred in per_source.values():
        for ev in list(gt) + list(pred):
            duration = max(duration, ev.end_s)
    width = int(label_w + duration * px_per_s + 10)
    height = lane_h * max(1, len(per_source)) + 10
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for lane, source in enumerate(sorted(per_source)):
        gt, pred = per_source[source]
        y0 = 5 + lane * lane_h
        parts.append(
            f'<text x="4" y="{y0 + 18}" font-family="monospace" font-size="11">{source}</text>'
        )
        for ev in gt:
            x = label_w + ev.start_s * px_per_s
            w = max(1.0, (ev.end_s - ev.start_s) * px_per_s)
            parts.append(
                f'<rect x="{x:.1f}" y="{y0}" width="{w:.1f}" height="{bar_h}" fill="#2b8a3e"/>'
            )
        for ev in pred:
            x = label_w + ev.start_s * px_per_s
            w = max(1.0, (ev.end_s - ev.start_s) * px_per_s)
            parts.append(
                f'<rect x="{x:.1f}" y="{y0 + bar_h + 4}" width="{w:.1f}" height="{bar_h}" fill="#1864ab"/>'
            )
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts) + "\n")
