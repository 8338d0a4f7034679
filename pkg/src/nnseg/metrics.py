"""Event-level evaluation: interval IoU, greedy highest-IoU matching,
per-subject precision/recall with equal-weight averaging, binary window
accuracy, and Cohen's kappa over fixed incidence windows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from math import ceil

import numpy as np

from .segmenter import Event

DEFAULT_IOU_THRESHOLDS = (0.1, 0.3, 0.5)


def interval_iou(a: Event, b: Event) -> float:
    """Temporal intersection-over-union of two events; 0 when disjoint."""
    inter = min(a.end_s, b.end_s) - max(a.start_s, b.start_s)
    if inter <= 0:
        return 0.0
    union = max(a.end_s, b.end_s) - min(a.start_s, b.start_s)
    return inter / union


def match_events(
    pred: list[Event], gt: list[Event], t: float
) -> list[tuple[int, int, float]]:
    """Greedy one-to-one matching of predictions to ground truth.

    Candidate pairs need IoU >= t (and positive overlap); pairs are taken in
    descending IoU order, ties broken by earliest prediction start, then
    earliest ground-truth start.  Returns (pred index, gt index, iou) triples.
    """
    candidates = []
    for i, p in enumerate(pred):
        for j, g in enumerate(gt):
            iou = interval_iou(p, g)
            if iou > 0 and iou >= t - 1e-12:
                candidates.append((-iou, p.start_s, g.start_s, i, j, iou))
    candidates.sort()
    used_p: set[int] = set()
    used_g: set[int] = set()
    matches = []
    for _, _, _, i, j, iou in candidates:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        matches.append((i, j, iou))
    return matches


def precision_recall(pred: list[Event], gt: list[Event], t: float) -> tuple[float, float]:
    """Event precision/recall at IoU threshold t.

    With no predictions precision is 1 by convention; with no ground truth
    recall is 1 (whole clips can legitimately contain no events).
    """
    tp = len(match_events(pred, gt, t))
    fp = len(pred) - tp
    fn = len(gt) - tp
    precision = tp / (tp + fp) if (tp + fp) > 0 else 1.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 1.0
    return precision, recall


@dataclass
class SubjectResult:
    subject: str
    t: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int


@dataclass
class EvalReport:
    """Per-subject rows plus subject-equal-weight AP/AR per IoU threshold."""

    rows: list[SubjectResult]
    ap: dict[float, float]
    ar: dict[float, float]
    thresholds: tuple[float, ...]


def ap_ar_report(
    per_subject: dict[str, list[tuple[list[Event], list[Event]]]],
    thresholds: tuple[float, ...] = DEFAULT_IOU_THRESHOLDS,
) -> EvalReport:
    """Evaluate (pred, gt) clip pairs grouped by subject.

    Counts are pooled within each subject across its clips before forming the
    ratios; AP_t and AR_t are then unweighted means over subjects, so every
    subject counts the same regardless of clip count.
    """
    if not per_subject:
        raise ValueError("need at least one subject to evaluate")
    rows = []
    ap: dict[float, float] = {}
    ar: dict[float, float] = {}
    for t in thresholds:
        precisions = []
        recalls = []
        for subject in sorted(per_subject):
            tp = fp = fn = 0
            for pred, gt in per_subject[subject]:
                m = len(match_events(pred, gt, t))
                tp += m
                fp += len(pred) - m
                fn += len(gt) - m
            precision = tp / (tp + fp) if (tp + fp) > 0 else 1.0
            recall = tp / (tp + fn) if (tp + fn) > 0 else 1.0
            rows.append(SubjectResult(subject, t, precision, recall, tp, fp, fn))
            precisions.append(precision)
            recalls.append(recall)
        ap[t] = float(np.mean(precisions))
        ar[t] = float(np.mean(recalls))
    return EvalReport(rows=rows, ap=ap, ar=ar, thresholds=tuple(thresholds))


def write_report_csv(report: EvalReport, path, header_comment: str | None = None) -> None:
    with open(path, "w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        w = csv.writer(f)
        w.writerow(["subject", "t", "precision", "recall", "tp", "fp", "fn"])
        for r in report.rows:
            w.writerow(
                [r.subject, f"{r.t:g}", f"{r.precision:.6f}", f"{r.recall:.6f}", r.tp, r.fp, r.fn]
            )
        for t in report.thresholds:
            w.writerow(["ALL", f"{t:g}", f"{report.ap[t]:.6f}", f"{report.ar[t]:.6f}", "", "", ""])


def binary_accuracy(scores, labels, threshold: float = 0.5) -> float:
    """Fraction of windows where (score >= threshold) equals the label."""
    scores = np.asarray([getattr(s, "score", s) for s in scores], dtype=float)
    labels = np.asarray(labels, dtype=int)
    if len(scores) == 0:
        raise ValueError("binary_accuracy needs at least one example")
    if len(scores) != len(labels):
        raise ValueError(f"length mismatch: {len(scores)} scores vs {len(labels)} labels")
    predicted = (scores >= threshold - 1e-12).astype(int)
    return float((predicted == labels).mean())


def _incidence(events: list[Event], duration_s: float, window_s: float) -> np.ndarray:
    n = max(1, ceil(duration_s / window_s - 1e-9))
    marks = np.zeros(n, dtype=bool)
    for ev in events:
        lo = max(0, int(np.floor(ev.start_s / window_s + 1e-9)))
        hi = min(n - 1, int(np.ceil(ev.end_s / window_s - 1e-9)) - 1)
        for i in range(lo, hi + 1):
            bin_start = i * window_s
            bin_end = min(duration_s, bin_start + window_s)
            if ev.start_s < bin_end - 1e-9 and ev.end_s > bin_start + 1e-9:
                marks[i] = True
    return marks


def cohen_kappa_incidence(
    a: list[Event],
    b: list[Event],
    duration_s: float,
    window_s: float = 10.0,
) -> float:
    """Cohen's kappa between two coders on fixed incidence windows.

    [0, duration) is cut into consecutive ``window_s`` bins (last may be
    short); a coder marks a bin when any event overlaps it.  Kappa comes from
    the 2x2 contingency table and is defined as 1.0 in the degenerate
    all-agree case where expected agreement is 1.
    """
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    ma = _incidence(a, duration_s, window_s)
    mb = _incidence(b, duration_s, window_s)
    n = len(ma)
    p_o = float((ma == mb).mean())
    pa = float(ma.mean())
    pb = float(mb.mean())
    p_e = pa * pb + (1 - pa) * (1 - pb)
    if 1.0 - p_e < 1e-12:
        return 1.0 if p_o > 1.0 - 1e-12 else 0.0
    return (p_o - p_e) / (1.0 - p_e)
