"""Dense optical flow and HSV motion encoding.

Flow is estimated with a polynomial-expansion method: every pixel
neighborhood is approximated by a quadratic model fitted under Gaussian
weighting, and the displacement field follows from relating the expansion
coefficients of the two frames.  The solve runs coarse-to-fine over an image
pyramid with Gaussian aggregation of the per-pixel normal equations, which
keeps it stable on the low-texture, low-amplitude motion this package cares
about.

The HSV encoding maps flow direction to hue and magnitude to value
(saturation is fixed at 1), turning subtle motion into a visible color
signal.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .video_io import Frame, FrameSequence


@dataclass(frozen=True)
class FlowParams:
    """Dense-flow solver parameters (pyramid and neighborhood sizes)."""

    levels: int = 3
    scale: float = 0.5
    window: int = 15
    iterations: int = 3
    poly_n: int = 5
    poly_sigma: float = 1.1

    def __post_init__(self):
        if self.levels < 1 or not (0 < self.scale < 1):
            raise ValueError("levels must be >= 1 and 0 < scale < 1")
        if self.poly_n % 2 == 0 or self.poly_n < 3:
            raise ValueError("poly_n must be odd and >= 3")
        if self.window < 3 or self.iterations < 1:
            raise ValueError("window must be >= 3 and iterations >= 1")


@dataclass
class FlowField:
    """Per-pixel displacement between two frames, in pixels per frame step."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float32)
        self.v = np.asarray(self.v, dtype=np.float32)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise ValueError("u and v must be 2-D arrays of equal shape")
        if not (np.isfinite(self.u).all() and np.isfinite(self.v).all()):
            raise ValueError("flow contains non-finite values")

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)


@dataclass
class FlowSequence:
    """Adjacent-pair flow fields for a clip, plus their HSV renderings."""

    fields: list[FlowField]
    hsv_frames: list[np.ndarray]
    fps: float

    def __post_init__(self):
        if len(self.fields) != len(self.hsv_frames):
            raise ValueError("fields and hsv_frames must have equal length")


def _as_gray(frame) -> np.ndarray:
    if isinstance(frame, Frame):
        return np.asarray(frame.pixels, dtype=np.float64)
    return np.asarray(frame, dtype=np.float64)


def _poly_kernels(n: int, sigma: float):
    x = np.arange(-n, n + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    g /= g.sum()
    return g, x * g, x * x * g


def _expand(img: np.ndarray, n: int, sigma: float):
    """Quadratic expansion coefficients (A11, A12, A22, b1, b2) per pixel.

    The local model is f(dx, dy) ~ [dx dy] A [dx dy]^T + b . [dx dy] + c with
    Gaussian applicability; the solve reduces to separable correlations plus
    four inverse-matrix constants because the weighting is symmetric.
    """
    g, xg, xxg = _poly_kernels(n, sigma)
    m2 = float((np.arange(-n, n + 1) ** 2 * g).sum())
    m4 = float((np.arange(-n, n + 1) ** 4 * g).sum())
    # Coupled block for (1, x^2, y^2); x, y and xy rows are independent.
    G = np.array(
        [
            [1.0, m2, m2],
            [m2, m4, m2 * m2],
            [m2, m2 * m2, m4],
        ]
    )
    Ginv = np.linalg.inv(G)
    ig03, ig33 = Ginv[0, 1], Ginv[1, 1]
    ig11 = 1.0 / m2
    ig55 = 1.0 / (m2 * m2)

    corr = lambda a, w, axis: ndimage.correlate1d(a, w, axis=axis, mode="nearest")
    t0 = corr(img, g, 1)
    t1 = corr(img, xg, 1)
    t2 = corr(img, xxg, 1)
    v0 = corr(t0, g, 0)
    v1 = corr(t1, g, 0)      # <x f>
    v2 = corr(t0, xg, 0)     # <y f>
    v3 = corr(t2, g, 0)      # <x^2 f>
    v4 = corr(t0, xxg, 0)    # <y^2 f>
    v5 = corr(t1, xg, 0)     # <x y f>

    b1 = ig11 * v1
    b2 = ig11 * v2
    a11 = ig33 * v3 + ig03 * v0
    a22 = ig33 * v4 + ig03 * v0
    a12 = 0.5 * ig55 * v5
    return a11, a12, a22, b1, b2


def _pyramid_sizes(shape, params: FlowParams, min_side: int = 12):
    sizes = []
    h, w = shape
    for lvl in range(params.levels):
        f = params.scale ** lvl
        hs, ws = int(round(h * f)), int(round(w * f))
        if min(hs, ws) < min_side:
            break
        sizes.append((hs, ws))
    return sizes


def _expansion_pyramid(img: np.ndarray, params: FlowParams):
    """Expansion coefficients of an image at every pyramid level."""
    sizes = _pyramid_sizes(img.shape, params)
    out = []
    cur = img
    for hs, ws in sizes:
        if cur.shape != (hs, ws):
            blurred = ndimage.gaussian_filter(cur, sigma=0.5 / params.scale, mode="nearest")
            cur = ndimage.zoom(
                blurred, (hs / cur.shape[0], ws / cur.shape[1]), order=1, mode="nearest"
            )
        out.append(_expand(cur, params.poly_n, params.poly_sigma))
    return out


def _solve_level(exp1, exp2, flow_u, flow_v, params: FlowParams):
    a11_1, a12_1, a22_1, b1_1, b2_1 = exp1
    h, w = a11_1.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    half = params.window // 2
    sigma = max(1.0, 0.3 * half)
    truncate = half / sigma

    blur = lambda a: ndimage.gaussian_filter(a, sigma, truncate=truncate, mode="nearest")
    sample = lambda a, cy, cx: ndimage.map_coordinates(a, [cy, cx], order=1, mode="nearest")

    u, v = flow_u, flow_v
    for _ in range(params.iterations):
        cy = yy + v
        cx = xx + u
        a11 = 0.5 * (a11_1 + sample(exp2[0], cy, cx))
        a12 = 0.5 * (a12_1 + sample(exp2[1], cy, cx))
        a22 = 0.5 * (a22_1 + sample(exp2[2], cy, cx))
        db1 = a11 * u + a12 * v - 0.5 * (sample(exp2[3], cy, cx) - b1_1)
        db2 = a12 * u + a22 * v - 0.5 * (sample(exp2[4], cy, cx) - b2_1)

        m11 = blur(a11 * a11 + a12 * a12)
        m12 = blur(a12 * (a11 + a22))
        m22 = blur(a12 * a12 + a22 * a22)
        h1 = blur(a11 * db1 + a12 * db2)
        h2 = blur(a12 * db1 + a22 * db2)

        det = m11 * m22 - m12 * m12
        ok = det > 1e-14
        det_safe = np.where(ok, det, 1.0)
        u = np.where(ok, (m22 * h1 - m12 * h2) / det_safe, u)
        v = np.where(ok, (m11 * h2 - m12 * h1) / det_safe, v)
    return u, v


def _flow_from_pyramids(pyr1, pyr2, params: FlowParams):
    n_levels = min(len(pyr1), len(pyr2))
    u = v = None
    for lvl in range(n_levels - 1, -1, -1):
        h, w = pyr1[lvl][0].shape
        if u is None:
            u = np.zeros((h, w))
            v = np.zeros((h, w))
        else:
            zy, zx = h / u.shape[0], w / u.shape[1]
            u = ndimage.zoom(u, (zy, zx), order=1, mode="nearest") * zx
            v = ndimage.zoom(v, (zy, zx), order=1, mode="nearest") * zy
        u, v = _solve_level(pyr1[lvl], pyr2[lvl], u, v, params)
    return u, v


def dense_flow(prev, next, params: FlowParams | None = None) -> FlowField:
    """Dense displacement field mapping ``prev`` pixels onto ``next``."""
    params = params or FlowParams()
    a = _as_gray(prev)
    b = _as_gray(next)
    if a.shape != b.shape:
        raise ValueError(f"frame size mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < 16:
        raise ValueError(f"frames too small for dense flow: {a.shape} (min side 16)")
    u, v = _flow_from_pyramids(
        _expansion_pyramid(a, params), _expansion_pyramid(b, params), params
    )
    return FlowField(u, v)


def flow_to_hsv(flow: FlowField, max_mag: float | None = None) -> np.ndarray:
    """Encode a flow field as an (h, w, 3) HSV frame in [0, 1].

    Hue is the flow direction mapped from [0, 2pi) to [0, 1); value is the
    magnitude divided by the frame maximum (``max_mag=None``) or by a fixed
    ``max_mag`` with clipping; saturation is 1.  Zero-magnitude pixels get
    hue 0 and value 0.
    """
    mag = flow.magnitude.astype(np.float64)
    if max_mag is None:
        peak = float(mag.max())
        value = mag / peak if peak > 0 else np.zeros_like(mag)
    else:
        if max_mag <= 0:
            raise ValueError("fixed normalization requires max_mag > 0")
        value = np.clip(mag / max_mag, 0.0, 1.0)
    angle = np.arctan2(flow.v.astype(np.float64), flow.u.astype(np.float64))
    hue = np.mod(angle, 2.0 * np.pi) / (2.0 * np.pi)
    hue = np.where(mag > 0, hue, 0.0)
    hsv = np.stack([hue, np.ones_like(hue), value], axis=-1)
    return hsv.astype(np.float32)


def clip_flow_encode(
    seq: FrameSequence,
    params: FlowParams | None = None,
    max_mag: float | None = None,
) -> FlowSequence:
    """Flow on every adjacent frame pair, HSV-encoded; returns n-1 entries."""
    params = params or FlowParams()
    if seq.n_frames < 2:
        raise ValueError("need at least 2 frames for flow encoding")
    fields = []
    hsv = []
    prev_pyr = _expansion_pyramid(np.asarray(seq.pixels[0], dtype=np.float64), params)
    for k in range(1, seq.n_frames):
        cur_pyr = _expansion_pyramid(np.asarray(seq.pixels[k], dtype=np.float64), params)
        u, v = _flow_from_pyramids(prev_pyr, cur_pyr, params)
        fld = FlowField(u, v)
        fields.append(fld)
        hsv.append(flow_to_hsv(fld, max_mag=max_mag))
        prev_pyr = cur_pyr
    return FlowSequence(fields, hsv, seq.fps)


def write_flo(flow: FlowField, path) -> None:
    """Dump a flow field in the interchange binary format (magic PIEH)."""
    h, w = flow.u.shape
    data = np.empty((h, w, 2), dtype="<f4")
    data[..., 0] = flow.u
    data[..., 1] = flow.v
    with open(path, "wb") as f:
        f.write(b"PIEH")
        f.write(struct.pack("<ii", w, h))
        f.write(data.tobytes())


def read_flo(path) -> FlowField:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != b"PIEH":
            raise ValueError(f"not a flow file (bad magic {magic!r}): {path}")
        w, h = struct.unpack("<ii", f.read(8))
        data = np.frombuffer(f.read(h * w * 2 * 4), dtype="<f4").reshape(h, w, 2)
    return FlowField(data[..., 0].copy(), data[..., 1].copy())


def save_hsv_frames(flows: FlowSequence, dir_path) -> Path:
    """Write HSV flow frames as 8-bit color PNGs (channels = H, S, V)."""
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    for i, hsv in enumerate(flows.hsv_frames):
        img8 = np.clip(np.rint(hsv * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(img8, mode="RGB").save(dir_path / f"flow_{i:06d}.png")
    (dir_path / "meta.txt").write_text(f"fps={flows.fps:g}\n")
    return dir_path


def load_hsv_frames(dir_path, declared_fps: float | None = None):
    """Load an HSV flow-frame directory; returns (frames list, fps)."""
    from .video_io import read_meta_fps

    dir_path = Path(dir_path)
    if not dir_path.is_dir():
        raise FileNotFoundError(f"no such flow directory: {dir_path}")
    paths = sorted(dir_path.glob("flow_*.png"))
    if not paths:
        raise ValueError(f"no flow_%06d.png files in {dir_path}")
    frames = []
    for i, p in enumerate(paths):
        if p.name != f"flow_{i:06d}.png":
            raise ValueError(f"non-contiguous flow frames at {p.name}")
        with Image.open(p) as im:
            frames.append(np.asarray(im, dtype=np.float32) / 255.0)
    fps = read_meta_fps(dir_path)
    if fps is None:
        fps = declared_fps
    if fps is None:
        raise ValueError(f"no meta.txt in {dir_path} and no declared_fps given")
    return frames, float(fps)
