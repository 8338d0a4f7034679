"""Grayscale frame-sequence I/O.

The canonical on-disk format is a directory of 8-bit grayscale images named
``frame_%06d.pgm`` (or ``.png``) with indices starting at 0, plus an optional
``meta.txt`` containing a single line ``fps=<decimal>``.  Everything in-memory
is float in [0, 1].
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

# ITU-R 601 luminance weights, applied when a color image sneaks in.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

_FRAME_RE = re.compile(r"^frame_(\d{6})\.(pgm|png)$")


@dataclass
class Frame:
    """A single grayscale frame: ``pixels`` in [0, 1], 0-based ``index``."""

    pixels: np.ndarray
    index: int

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class FrameSequence:
    """An ordered stack of same-sized grayscale frames at a fixed frame rate.

    ``pixels`` has shape (n_frames, height, width), values in [0, 1].
    """

    pixels: np.ndarray
    fps: float

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        if self.pixels.ndim != 3 or self.pixels.shape[0] < 1:
            raise ValueError("frame stack must be (n, h, w) with n >= 1")
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        lo, hi = float(self.pixels.min()), float(self.pixels.max())
        if lo < -1e-6 or hi > 1 + 1e-6:
            raise ValueError(f"pixel values outside [0,1]: min={lo}, max={hi}")

    @property
    def n_frames(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.fps

    def frame(self, i: int) -> Frame:
        return Frame(self.pixels[i], i)

    def __len__(self) -> int:
        return self.n_frames


def to_luminance(img: np.ndarray) -> np.ndarray:
    """Reduce an (h, w) or (h, w, 3+) array to single-channel luminance."""
    if img.ndim == 2:
        return img.astype(np.float32)
    w = np.asarray(LUMA_WEIGHTS, dtype=np.float32)
    return img[..., :3].astype(np.float32) @ w


def _read_image(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im)
    except Exception as exc:
        raise ValueError(f"unreadable image {path}: {exc}") from exc
    if arr.dtype == np.uint16:
        return to_luminance(arr.astype(np.float32) / 65535.0)
    return to_luminance(arr.astype(np.float32) / 255.0)


def read_meta_fps(dir_path: Path) -> float | None:
    """Return the fps declared in ``meta.txt``, or None when absent."""
    meta = Path(dir_path) / "meta.txt"
    if not meta.is_file():
        return None
    text = meta.read_text().strip()
    m = re.fullmatch(r"fps=([0-9.]+)", text)
    if m is None:
        raise ValueError(f"malformed meta.txt: {text!r} (expected 'fps=<decimal>')")
    fps = float(m.group(1))
    if not fps > 0:
        raise ValueError(f"meta.txt fps must be positive, got {fps}")
    return fps


def load_sequence(dir_path, declared_fps: float | None = None) -> FrameSequence:
    """Load a frame directory into a FrameSequence.

    Frames must be named ``frame_%06d.pgm``/``.png`` with contiguous indices
    from 0.  The frame rate comes from ``meta.txt`` when present, otherwise
    from ``declared_fps``.
    """
    dir_path = Path(dir_path)
    if not dir_path.is_dir():
        raise FileNotFoundError(f"no such frame directory: {dir_path}")
    indexed: dict[int, Path] = {}
    for p in sorted(dir_path.iterdir()):
        m = _FRAME_RE.match(p.name)
        if m:
            idx = int(m.group(1))
            if idx in indexed:
                raise ValueError(f"duplicate frame index {idx} in {dir_path}")
            indexed[idx] = p
    if not indexed:
        raise ValueError(f"no frame_%06d.pgm/.png files in {dir_path}")
    n = max(indexed) + 1
    missing = [i for i in range(n) if i not in indexed]
    if missing:
        raise ValueError(f"non-contiguous frame indices, missing {missing[:5]} in {dir_path}")

    fps = read_meta_fps(dir_path)
    if fps is None:
        fps = declared_fps
    if fps is None:
        raise ValueError(f"no meta.txt in {dir_path} and no declared_fps given")

    frames = []
    shape = None
    for i in range(n):
        arr = _read_image(indexed[i])
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise ValueError(
                f"mixed frame dimensions: frame {i} is {arr.shape}, expected {shape}"
            )
        frames.append(arr)
    return FrameSequence(np.stack(frames), float(fps))


def _write_pgm(path: Path, img8: np.ndarray) -> None:
    h, w = img8.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(img8.tobytes())


def write_sequence(seq: FrameSequence, dir_path, fmt: str = "pgm") -> Path:
    """Write a sequence as 8-bit frames plus ``meta.txt``; returns the directory."""
    if fmt not in ("pgm", "png"):
        raise ValueError(f"unsupported format {fmt!r}")
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    quantized = np.clip(np.rint(seq.pixels * 255.0), 0, 255).astype(np.uint8)
    for i in range(seq.n_frames):
        path = dir_path / f"frame_{i:06d}.{fmt}"
        if fmt == "pgm":
            _write_pgm(path, quantized[i])
        else:
            Image.fromarray(quantized[i], mode="L").save(path)
    (dir_path / "meta.txt").write_text(f"fps={seq.fps:g}\n")
    return dir_path


def resample_fps(seq: FrameSequence, target_fps: float) -> FrameSequence:
    """Resample to a lower frame rate by nearest-frame sampling.

    Output frame k is the source frame whose timestamp is nearest to
    k/target_fps (ties round to the later frame).  The output frame count is
    round(n * target_fps / fps), which keeps the duration mismatch within half
    an output frame period.
    """
    if not target_fps > 0:
        raise ValueError("target_fps must be positive")
    if target_fps > seq.fps + 1e-9:
        raise ValueError(
            f"cannot upsample: target_fps {target_fps} > source fps {seq.fps}"
        )
    if abs(target_fps - seq.fps) < 1e-9:
        return FrameSequence(seq.pixels.copy(), seq.fps)
    ratio = seq.fps / target_fps
    n_out = max(1, int(np.floor(seq.n_frames / ratio + 0.5)))
    idx = np.floor(np.arange(n_out) * ratio + 0.5).astype(int)
    idx = np.clip(idx, 0, seq.n_frames - 1)
    return FrameSequence(seq.pixels[idx].copy(), float(target_fps))
