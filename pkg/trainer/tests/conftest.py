"""Builds a synthetic flow-clip corpus through the segmentation toolkit's CLI.

The trainer only understands the toolkit's file formats (frame directories,
flow directories, clip manifests), so the fixture shells out to ``nnseg
synth`` and ``nnseg flow`` and then writes manifests referencing the flow
directories.  200 clips total: 120 train, 40 val, 40 test, each half nns and
half non-nns.
"""

import csv
import subprocess
import sys
from pathlib import Path

import pytest

CLIP_S = 2.5
FPS = 10.0


def run_nnseg(*args):
    subprocess.run(
        [sys.executable, "-m", "nnseg.cli", *[str(a) for a in args]],
        check=True,
        capture_output=True,
    )


def synth_video(root: Path, name: str, body: str) -> Path:
    spec = root / f"{name}.spec"
    spec.write_text(body)
    out = root / name
    run_nnseg("synth", "--spec", spec, "--out", out)
    return out


def flow_encode(video: Path) -> Path:
    out = video.parent / (video.name + "_flow")
    run_nnseg("flow", "--in", video, "--out", out)
    return out


def read_burst_extents(video: Path):
    rows = []
    with open(video / "annotations.csv", newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    reader = csv.reader(lines)
    next(reader)
    for row in reader:
        if row and row[2] == "nns":
            rows.append((float(row[3]), float(row[4])))
    return rows


def burst_spec(seed: int) -> str:
    starts = ",".join(str(round(1.0 + 8.0 * k, 3)) for k in range(7))
    return (
        "duration_s=60.0\nfps=10\nframe_size=48\n"
        f"bursts={starts}\nsucks_min=8\nsucks_max=8\n"
        f"suck_amplitude_px=2.0\nnoise_std=0.003\nseed={seed}\n"
    )


def quiet_spec(seed: int, jitter: float) -> str:
    return (
        "duration_s=40.0\nfps=10\nframe_size=48\nnoise_std=0.004\n"
        f"jitter_std_px={jitter}\nseed={seed}\n"
    )


def positive_starts(extents, limit, step=0.2):
    starts = []
    for lo, hi in extents:
        t = lo
        while t + CLIP_S + 0.1 <= hi + 1e-9 and len(starts) < limit:
            starts.append(round(t, 3))
            t = round(t + step, 3)
    return starts


def quiet_starts_from(extents, duration, limit, step=0.5):
    starts = []
    t = 0.0
    while t + CLIP_S + 0.1 <= duration and len(starts) < limit:
        if not any(lo < t + CLIP_S and hi > t for lo, hi in extents):
            starts.append(round(t, 3))
        t = round(t + step, 3)
    return starts


def write_manifest(path: Path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["source", "start_s", "length_s", "class"])
        for source, start, label in rows:
            w.writerow([source, f"{start:.3f}", f"{CLIP_S:.3f}", label])


@pytest.fixture(scope="session")
def clip_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    pos_rows = []
    for seed in (1, 2):
        video = synth_video(root, f"burst{seed}", burst_spec(seed))
        flow = flow_encode(video)
        extents = read_burst_extents(video)
        rel = flow.name
        pos_rows += [(rel, s, "nns") for s in positive_starts(extents, 50)]
    neg_rows = []
    for seed, jitter in ((3, 0.0), (4, 0.3)):
        video = synth_video(root, f"quiet{seed}", quiet_spec(seed, jitter))
        flow = flow_encode(video)
        rel = flow.name
        neg_rows += [(rel, s, "non-nns") for s in quiet_starts_from([], 40.0, 50)]

    assert len(pos_rows) >= 100 and len(neg_rows) >= 100
    pos_rows, neg_rows = pos_rows[:100], neg_rows[:100]
    splits = {
        "train": pos_rows[:60] + neg_rows[:60],
        "val": pos_rows[60:80] + neg_rows[60:80],
        "test": pos_rows[80:100] + neg_rows[80:100],
    }
    manifests = {}
    for name, rows in splits.items():
        path = root / f"{name}.csv"
        write_manifest(path, rows)
        manifests[name] = path
    return manifests
