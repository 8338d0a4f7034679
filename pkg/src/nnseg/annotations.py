"""Coder annotation files and the clip-sampling protocol.

Annotation CSVs carry one coder's labeled events for one subject:

    #duration_s=<decimal>
    subject,coder,label,start_s,end_s
    baby01,coderA,nns,12.0,16.5
    ...

Labels are ``nns`` or ``pacifier``; same-label events from one coder must not
overlap.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .segmenter import Event

LABELS = ("nns", "pacifier")


@dataclass
class AnnotationSet:
    subject: str
    coder: str
    duration_s: float
    events: list[Event] = field(default_factory=list)

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        for ev in self.events:
            if ev.label not in LABELS:
                raise ValueError(f"unknown annotation label {ev.label!r}")
            if ev.start_s < -1e-9 or ev.end_s > self.duration_s + 1e-9:
                raise ValueError(
                    f"event [{ev.start_s}, {ev.end_s}] exceeds duration {self.duration_s}"
                )
        for label in LABELS:
            evs = sorted(self.with_label(label), key=lambda e: e.start_s)
            for prev, cur in zip(evs, evs[1:]):
                if cur.start_s < prev.end_s - 1e-9:
                    raise ValueError(
                        f"overlapping {label} events from one coder: "
                        f"[{prev.start_s},{prev.end_s}] and [{cur.start_s},{cur.end_s}]"
                    )

    def with_label(self, label: str) -> list[Event]:
        return [ev for ev in self.events if ev.label == label]


def parse_annotations(path) -> AnnotationSet:
    """Read and validate one annotation CSV."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such annotation file: {path}")
    text = path.read_text().splitlines()
    if not text or not text[0].startswith("#duration_s="):
        raise ValueError(f"{path}: first line must be '#duration_s=<decimal>'")
    duration = float(text[0].split("=", 1)[1])
    reader = csv.reader(text[1:])
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["subject", "coder", "label", "start_s", "end_s"]:
        raise ValueError(f"{path}: bad header {header}")
    subject = coder = None
    events = []
    for row in reader:
        if not row:
            continue
        if len(row) != 5:
            raise ValueError(f"{path}: malformed row {row}")
        subj, cod, label, start, end = (c.strip() for c in row)
        if subject is None:
            subject, coder = subj, cod
        elif (subj, cod) != (subject, coder):
            raise ValueError(f"{path}: mixed subject/coder rows ({subj},{cod}) vs ({subject},{coder})")
        start_s, end_s = float(start), float(end)
        if start_s >= end_s:
            raise ValueError(f"{path}: event start {start_s} >= end {end_s}")
        events.append(Event(start_s=start_s, end_s=end_s, label=label, confidence=1.0))
    if subject is None:
        raise ValueError(f"{path}: no annotation rows")
    return AnnotationSet(subject=subject, coder=coder, duration_s=duration, events=events)


def write_annotations(ann: AnnotationSet, path) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"#duration_s={ann.duration_s:g}\n")
        w = csv.writer(f)
        w.writerow(["subject", "coder", "label", "start_s", "end_s"])
        for ev in sorted(ann.events, key=lambda e: (e.start_s, e.label)):
            w.writerow([ann.subject, ann.coder, ev.label, f"{ev.start_s:.3f}", f"{ev.end_s:.3f}"])


@dataclass(frozen=True)
class ClipEntry:
    source: str
    start_s: float
    length_s: float
    label: str  # nns | non-nns | mixed


@dataclass
class ClipManifest:
    entries: list[ClipEntry]
    seed: int


def write_manifest(manifest: ClipManifest, path, header_comment: str | None = None) -> None:
    with open(path, "w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        w = csv.writer(f)
        w.writerow(["source", "start_s", "length_s", "class"])
        for e in manifest.entries:
            w.writerow([e.source, f"{e.start_s:.3f}", f"{e.length_s:.3f}", e.label])


def read_manifest(path) -> list[ClipEntry]:
    with open(path, newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["source", "start_s", "length_s", "class"]:
        raise ValueError(f"bad manifest header in {path}: {header}")
    entries = []
    for row in reader:
        if not row:
            continue
        entries.append(ClipEntry(row[0], float(row[1]), float(row[2]), row[3]))
    return entries


def _overlaps_any(start: float, end: float, events: list[Event]) -> bool:
    return any(ev.start_s < end - 1e-9 and ev.end_s > start + 1e-9 for ev in events)


def _inside_any(start: float, end: float, events: list[Event]) -> bool:
    return any(ev.start_s <= start + 1e-9 and ev.end_s >= end - 1e-9 for ev in events)


MAX_REDRAWS = 1000


def sample_clips(
    ann: AnnotationSet,
    n_pos: int = 0,
    n_neg: int = 0,
    clip_s: float = 2.5,
    n_mixed: int = 0,
    mixed_clip_s: float = 60.0,
    seed: int = 0,
) -> ClipManifest:
    """Draw classification and segmentation clips from one annotation set.

    Positive clips lie entirely inside an nns event; negative clips touch no
    nns event, and are drawn during pacifier use whenever pacifier events
    exist; mixed clips must contain at least one nns boundary.  Each clip is
    rejection-sampled with a cap of MAX_REDRAWS draws, after which the
    manifest is simply truncated ("up to" semantics).  Deterministic per seed.
    """
    rng = np.random.default_rng(seed)
    nns = ann.with_label("nns")
    pacifier = ann.with_label("pacifier")
    entries: list[ClipEntry] = []

    def draw(length: float, accept) -> float | None:
        span = ann.duration_s - length
        if span < 0:
            return None
        for _ in range(MAX_REDRAWS):
            start = round(float(rng.uniform(0.0, span)), 3)
            if accept(start, start + length):
                return start
        return None

    for _ in range(n_pos):
        start = draw(clip_s, lambda s, e: _inside_any(s, e, nns))
        if start is None:
            break
        entries.append(ClipEntry(ann.subject, start, clip_s, "nns"))
    for _ in range(n_neg):
        if pacifier:
            accept = lambda s, e: _inside_any(s, e, pacifier) and not _overlaps_any(s, e, nns)
        else:
            accept = lambda s, e: not _overlaps_any(s, e, nns)
        start = draw(clip_s, accept)
        if start is None:
            break
        entries.append(ClipEntry(ann.subject, start, clip_s, "non-nns"))

    boundaries = sorted({ev.start_s for ev in nns} | {ev.end_s for ev in nns})

    def has_transition(s: float, e: float) -> bool:
        return any(s + 1e-9 < b < e - 1e-9 for b in boundaries)

    for _ in range(n_mixed):
        start = draw(mixed_clip_s, has_transition)
        if start is None:
            break
        entries.append(ClipEntry(ann.subject, start, mixed_clip_s, "mixed"))
    return ClipManifest(entries=entries, seed=seed)
