"""Clip manifests and HSV flow-clip loading.

The trainer consumes the segmentation toolkit's file formats directly:

* clip manifest CSV: ``source,start_s,length_s,class`` where ``source`` is a
  flow-clip directory path (resolved relative to the manifest file) and
  ``class`` is ``nns`` or ``non-nns``;
* flow directory: ``flow_%06d.png`` 8-bit RGB frames carrying the H, S, V
  channels, plus ``meta.txt`` with ``fps=<decimal>``.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

LABELS = {"nns": 1, "non-nns": 0}


@dataclass(frozen=True)
class ClipRef:
    flow_dir: Path
    start_s: float
    length_s: float
    label: int


def read_manifest(path) -> list[ClipRef]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such manifest: {path}")
    with open(path, newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["source", "start_s", "length_s", "class"]:
        raise ValueError(f"bad manifest header in {path}: {header}")
    clips = []
    for row in reader:
        if not row:
            continue
        if len(row) != 4:
            raise ValueError(f"malformed manifest row in {path}: {row}")
        source, start_s, length_s, label = row
        if label not in LABELS:
            raise ValueError(f"manifest class must be nns|non-nns for training, got {label!r}")
        flow_dir = (path.parent / source).resolve()
        clips.append(ClipRef(flow_dir, float(start_s), float(length_s), LABELS[label]))
    if not clips:
        raise ValueError(f"empty manifest: {path}")
    return clips


def _read_fps(flow_dir: Path) -> float:
    meta = flow_dir / "meta.txt"
    if not meta.is_file():
        raise FileNotFoundError(f"missing meta.txt in {flow_dir}")
    m = re.fullmatch(r"fps=([0-9.]+)", meta.read_text().strip())
    if m is None:
        raise ValueError(f"malformed meta.txt in {flow_dir}")
    return float(m.group(1))


class FlowClipSet:
    """Loads manifest clips into one (n, t, 3, s, s) float32 array.

    Flow directories are read once and cached; every clip must resolve to the
    same frame count and spatial size.
    """

    def __init__(self, clips: list[ClipRef]):
        self.clips = clips
        self._dir_cache: dict[Path, tuple[np.ndarray, float]] = {}
        stacks = []
        labels = []
        shape = None
        for clip in clips:
            frames, fps = self._load_dir(clip.flow_dir)
            i0 = int(round(clip.start_s * fps))
            count = int(round(clip.length_s * fps))
            window = frames[i0 : i0 + count]
            if len(window) != count:
                raise ValueError(
                    f"clip at {clip.start_s}s x {clip.length_s}s runs past {clip.flow_dir}"
                )
            if shape is None:
                shape = window.shape
            elif window.shape != shape:
                raise ValueError(
                    f"clip shape mismatch: {window.shape} vs {shape} in {clip.flow_dir}"
                )
            stacks.append(window)
            labels.append(clip.label)
        self.x = np.transpose(np.stack(stacks), (0, 1, 4, 2, 3)).astype(np.float32)
        self.y = np.asarray(labels, dtype=np.float32)
        if len(np.unique(self.y)) < 2:
            raise ValueError("manifest covers a single class; training needs both")

    def _load_dir(self, flow_dir: Path):
        if flow_dir not in self._dir_cache:
            paths = sorted(flow_dir.glob("flow_*.png"))
            if not paths:
                raise FileNotFoundError(f"no flow_%06d.png frames in {flow_dir}")
            frames = []
            for i, p in enumerate(paths):
                if p.name != f"flow_{i:06d}.png":
                    raise ValueError(f"non-contiguous flow frames at {p}")
                with Image.open(p) as im:
                    frames.append(np.asarray(im, dtype=np.float32) / 255.0)
            self._dir_cache[flow_dir] = (np.stack(frames), _read_fps(flow_dir))
        return self._dir_cache[flow_dir]

    @property
    def frames(self) -> int:
        return self.x.shape[1]

    @property
    def input_size(self) -> int:
        return self.x.shape[3]

    def __len__(self) -> int:
        return len(self.y)
