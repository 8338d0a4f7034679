"""Corner detection, sparse Lucas-Kanade tracking, and MOSSE box propagation.

The face box rides on two trackers: a frequency-domain MOSSE correlation
filter carries the box itself from sparse detections to every frame, and
minimum-eigenvalue corners tracked with pyramidal Lucas-Kanade provide the
sub-pixel motion trajectory used downstream for stabilization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .video_io import Frame, FrameSequence


@dataclass
class BoundingBox:
    """Axis-aligned box with float top-left corner (x, y) and size (w, h)."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box size must be positive, got w={self.w}, h={self.h}")

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def shifted(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x + dx, self.y + dy, self.w, self.h)

    def clamped(self, frame_w: int, frame_h: int) -> "BoundingBox":
        """Translate the box to lie inside the frame (centered if oversized)."""
        w = min(self.w, frame_w)
        h = min(self.h, frame_h)
        x = min(max(self.x, 0.0), frame_w - w)
        y = min(max(self.y, 0.0), frame_h - h)
        return BoundingBox(x, y, w, h)

    def intersects_frame(self, frame_w: int, frame_h: int) -> bool:
        return self.x < frame_w and self.y < frame_h and self.x + self.w > 0 and self.y + self.h > 0


@dataclass
class CornerSet:
    """Sub-pixel corner locations (n, 2) as (x, y), with per-corner scores."""

    points: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if len(self.points) != len(self.scores):
            raise ValueError("points and scores length mismatch")

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class BoxTrack:
    """One box per frame plus the raw and smoothed stabilization trajectories."""

    boxes: list[BoundingBox]
    trajectory: np.ndarray | None = None
    smoothed: np.ndarray | None = None

    def __post_init__(self):
        if not self.boxes:
            raise ValueError("BoxTrack needs at least one box")
        for traj in (self.trajectory, self.smoothed):
            if traj is not None and len(traj) != len(self.boxes):
                raise ValueError("trajectory length must equal box count")

    def __len__(self) -> int:
        return len(self.boxes)


def _as_gray(frame) -> np.ndarray:
    if isinstance(frame, Frame):
        return np.asarray(frame.pixels, dtype=np.float64)
    return np.asarray(frame, dtype=np.float64)


# ---------------------------------------------------------------------------
# Shi-Tomasi corners


def _min_eig_response(img: np.ndarray, block: int = 3) -> np.ndarray:
    ix = ndimage.sobel(img, axis=1, mode="nearest") / 8.0
    iy = ndimage.sobel(img, axis=0, mode="nearest") / 8.0
    sxx = ndimage.uniform_filter(ix * ix, size=block, mode="nearest")
    syy = ndimage.uniform_filter(iy * iy, size=block, mode="nearest")
    sxy = ndimage.uniform_filter(ix * iy, size=block, mode="nearest")
    trace = sxx + syy
    root = np.sqrt((sxx - syy) ** 2 + 4.0 * sxy * sxy)
    return 0.5 * (trace - root)


def detect_corners(
    frame,
    max_corners: int = 200,
    quality: float = 0.01,
    min_distance: float = 8.0,
) -> CornerSet:
    """Strongest minimum-eigenvalue corners with greedy distance suppression.

    Corners are local maxima of the structure-tensor minimum eigenvalue that
    reach ``quality`` times the global maximum response, picked in descending
    score order while enforcing ``min_distance`` between kept corners.  Peak
    locations are refined to sub-pixel accuracy by parabolic interpolation.
    """
    img = _as_gray(frame)
    if img.shape[0] < 3 or img.shape[1] < 3:
        raise ValueError(f"frame too small for corner detection: {img.shape}")
    if not (0 < quality <= 1):
        raise ValueError("quality must be in (0, 1]")
    resp = _min_eig_response(img)
    peak = float(resp.max())
    if peak <= 0:
        return CornerSet(np.empty((0, 2)), np.empty(0))
    is_max = resp >= ndimage.maximum_filter(resp, size=3, mode="nearest")
    candidates = is_max & (resp >= quality * peak)
    candidates[:1, :] = candidates[-1:, :] = False
    candidates[:, :1] = candidates[:, -1:] = False
    ys, xs = np.nonzero(candidates)
    if len(ys) == 0:
        return CornerSet(np.empty((0, 2)), np.empty(0))
    order = np.argsort(resp[ys, xs])[::-1]
    ys, xs = ys[order], xs[order]

    kept_pts: list[tuple[float, float]] = []
    kept_scores: list[float] = []
    min_d2 = min_distance * min_distance
    cell = max(min_distance, 1.0)
    grid: dict[tuple[int, int], list[int]] = {}
    for y, x in zip(ys, xs):
        # Parabolic sub-pixel refinement along each axis, before suppression
        # so the min-distance invariant holds for the refined locations.
        fx = fy = 0.0
        d2x = resp[y, x - 1] - 2 * resp[y, x] + resp[y, x + 1]
        if d2x < 0:
            fx = float(np.clip(0.5 * (resp[y, x - 1] - resp[y, x + 1]) / d2x, -0.5, 0.5))
        d2y = resp[y - 1, x] - 2 * resp[y, x] + resp[y + 1, x]
        if d2y < 0:
            fy = float(np.clip(0.5 * (resp[y - 1, x] - resp[y + 1, x]) / d2y, -0.5, 0.5))
        rx, ry = x + fx, y + fy
        cx, cy = int(rx / cell), int(ry / cell)
        clash = False
        for gy in range(cy - 1, cy + 2):
            for gx in range(cx - 1, cx + 2):
                for k in grid.get((gx, gy), ()):  # nearby kept corners only
                    px, py = kept_pts[k]
                    if (px - rx) ** 2 + (py - ry) ** 2 < min_d2:
                        clash = True
                        break
                if clash:
                    break
            if clash:
                break
        if clash:
            continue
        grid.setdefault((cx, cy), []).append(len(kept_pts))
        kept_pts.append((rx, ry))
        kept_scores.append(float(resp[y, x]))
        if len(kept_pts) >= max_corners:
            break
    return CornerSet(np.array(kept_pts, dtype=np.float64), np.array(kept_scores))


# ---------------------------------------------------------------------------
# Pyramidal Lucas-Kanade


def _gray_pyramid(img: np.ndarray, levels: int, min_side: int) -> list[np.ndarray]:
    pyr = [img]
    for _ in range(1, levels):
        prev = pyr[-1]
        hs, ws = int(round(prev.shape[0] * 0.5)), int(round(prev.shape[1] * 0.5))
        if min(hs, ws) < min_side:
            break
        blurred = ndimage.gaussian_filter(prev, sigma=1.0, mode="nearest")
        pyr.append(
            ndimage.zoom(blurred, (hs / prev.shape[0], ws / prev.shape[1]), order=1, mode="nearest")
        )
    return pyr


def lk_track(
    prev,
    next,
    points: CornerSet | np.ndarray,
    levels: int = 3,
    window: int = 15,
    max_iters: int = 10,
    tol: float = 0.01,
    min_eig_threshold: float = 1e-4,
    max_residual: float = 0.1,
):
    """Track points from ``prev`` to ``next`` with iterative pyramidal LK.

    Returns ``(tracked, status)`` where ``tracked`` is an (n, 2) array of
    point locations in ``next`` and ``status`` is False for points whose local
    structure tensor is near-singular, that leave the frame, or whose final
    patch residual exceeds ``max_residual`` (diverged or occluded).
    """
    a = _as_gray(prev)
    b = _as_gray(next)
    if a.shape != b.shape:
        raise ValueError(f"frame size mismatch: {a.shape} vs {b.shape}")
    pts = points.points if isinstance(points, CornerSet) else np.asarray(points, dtype=np.float64)
    pts = pts.reshape(-1, 2)
    n = len(pts)
    if n == 0:
        return np.empty((0, 2)), np.empty(0, dtype=bool)

    half = window // 2
    pyr_a = _gray_pyramid(a, levels, min_side=window + 2)
    pyr_b = _gray_pyramid(b, levels, min_side=window + 2)
    n_levels = min(len(pyr_a), len(pyr_b))
    offs_y, offs_x = np.mgrid[-half : half + 1, -half : half + 1]
    offs_y = offs_y.ravel()[None, :]
    offs_x = offs_x.ravel()[None, :]

    status = np.ones(n, dtype=bool)
    disp = np.zeros((n, 2))  # displacement in level coordinates
    for lvl in range(n_levels - 1, -1, -1):
        ia, ib = pyr_a[lvl], pyr_b[lvl]
        sy = ia.shape[0] / a.shape[0]
        sx = ia.shape[1] / a.shape[1]
        if lvl < n_levels - 1:
            disp = disp * [ia.shape[1] / pyr_a[lvl + 1].shape[1], ia.shape[0] / pyr_a[lvl + 1].shape[0]]
        p = pts * [sx, sy]
        gy, gx = np.gradient(ia)

        px = p[:, 0:1] + offs_x
        py = p[:, 1:2] + offs_y
        patch_a = ndimage.map_coordinates(ia, [py.ravel(), px.ravel()], order=1, mode="nearest").reshape(n, -1)
        grad_x = ndimage.map_coordinates(gx, [py.ravel(), px.ravel()], order=1, mode="nearest").reshape(n, -1)
        grad_y = ndimage.map_coordinates(gy, [py.ravel(), px.ravel()], order=1, mode="nearest").reshape(n, -1)
        gxx = (grad_x * grad_x).sum(axis=1)
        gxy = (grad_x * grad_y).sum(axis=1)
        gyy = (grad_y * grad_y).sum(axis=1)
        trace = gxx + gyy
        min_eig = 0.5 * (trace - np.sqrt((gxx - gyy) ** 2 + 4 * gxy * gxy))
        ok = min_eig / (window * window) >= min_eig_threshold
        status &= ok
        det = gxx * gyy - gxy * gxy
        det = np.where(ok, det, 1.0)

        active = status.copy()
        for _ in range(max_iters):
            if not active.any():
                break
            qx = px + disp[:, 0:1]
            qy = py + disp[:, 1:2]
            patch_b = ndimage.map_coordinates(
                ib, [qy[active].ravel(), qx[active].ravel()], order=1, mode="nearest"
            ).reshape(active.sum(), -1)
            diff = patch_a[active] - patch_b
            b1 = (diff * grad_x[active]).sum(axis=1)
            b2 = (diff * grad_y[active]).sum(axis=1)
            da = det[active]
            step_x = (gyy[active] * b1 - gxy[active] * b2) / da
            step_y = (gxx[active] * b2 - gxy[active] * b1) / da
            disp[active, 0] += step_x
            disp[active, 1] += step_y
            moved = np.zeros(n, dtype=bool)
            moved[active] = np.hypot(step_x, step_y) > tol
            active &= moved

    tracked = pts + disp
    status &= (
        (tracked[:, 0] >= 0)
        & (tracked[:, 0] <= a.shape[1] - 1)
        & (tracked[:, 1] >= 0)
        & (tracked[:, 1] <= a.shape[0] - 1)
    )
    if status.any():
        # patch_a/offsets are from the finest level after the loop
        qx = tracked[:, 0:1] + offs_x
        qy = tracked[:, 1:2] + offs_y
        patch_b = ndimage.map_coordinates(
            pyr_b[0], [qy[status].ravel(), qx[status].ravel()], order=1, mode="nearest"
        ).reshape(status.sum(), -1)
        residual = np.abs(patch_a[status] - patch_b).mean(axis=1)
        ok = np.ones_like(status)
        ok[status] = residual <= max_residual
        status &= ok
    return tracked, status


# ---------------------------------------------------------------------------
# MOSSE correlation filter


@dataclass
class MosseState:
    """Running MOSSE filter: numerator/denominator spectra plus the live box.

    The effective filter is ``num / (den + regularizer)``; ``num`` and ``den``
    are exponential running averages over preprocessed training patches.
    """

    num: np.ndarray
    den: np.ndarray
    target_fft: np.ndarray
    window_size: tuple[int, int]
    learning_rate: float
    regularizer: float
    psr_threshold: float
    box: BoundingBox
    frame_shape: tuple[int, int]

    def __post_init__(self):
        w, h = self.window_size
        if self.num.shape != (h, w) or self.den.shape != (h, w):
            raise ValueError("filter dimensions must equal window_size")
        if not (0 < self.learning_rate <= 1):
            raise ValueError("learning_rate must be in (0, 1]")
        if self.regularizer < 0:
            raise ValueError("regularizer must be non-negative")


def _crop_padded(img: np.ndarray, x0: int, y0: int, w: int, h: int) -> np.ndarray:
    ys = np.clip(np.arange(y0, y0 + h), 0, img.shape[0] - 1)
    xs = np.clip(np.arange(x0, x0 + w), 0, img.shape[1] - 1)
    return img[np.ix_(ys, xs)]


def _preprocess_patch(patch: np.ndarray) -> np.ndarray:
    p = np.log1p(255.0 * patch.astype(np.float64))
    p = (p - p.mean()) / (p.std() + 1e-5)
    hann = np.outer(np.hanning(p.shape[0]), np.hanning(p.shape[1]))
    return p * hann


def _gaussian_peak(h: int, w: int, sigma: float = 2.0) -> np.ndarray:
    ys, xs = np.mgrid[0:h, 0:w]
    cy, cx = h // 2, w // 2
    return np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2.0 * sigma * sigma))


def _random_affine(patch: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    angle = rng.uniform(-0.1, 0.1)
    scale = rng.uniform(0.95, 1.05)
    c, s = np.cos(angle) / scale, np.sin(angle) / scale
    mat = np.array([[c, -s], [s, c]])
    center = (np.array(patch.shape) - 1) / 2.0
    offset = center - mat @ center
    return ndimage.affine_transform(patch, mat, offset=offset, order=1, mode="nearest")


def mosse_init(
    frame,
    bbox: BoundingBox,
    learning_rate: float = 0.125,
    regularizer: float = 1e-5,
    psr_threshold: float = 8.0,
    n_perturbations: int = 8,
    seed: int = 0,
) -> MosseState:
    """Train a fresh MOSSE filter on one frame.

    The filter is built from the preprocessed patch plus ``n_perturbations``
    small random affine warps of it, all mapped to a centered Gaussian target
    response in the frequency domain.
    """
    img = _as_gray(frame)
    fh, fw = img.shape
    if bbox.w < 8 or bbox.h < 8:
        raise ValueError(f"box too small to track: {bbox.w}x{bbox.h} (min 8x8)")
    if bbox.x < 0 or bbox.y < 0 or bbox.x + bbox.w > fw or bbox.y + bbox.h > fh:
        raise ValueError("init box must lie inside the frame")
    w, h = int(round(bbox.w)), int(round(bbox.h))
    x0, y0 = int(round(bbox.x)), int(round(bbox.y))
    patch = _crop_padded(img, x0, y0, w, h)

    target = np.fft.fft2(_gaussian_peak(h, w))
    rng = np.random.default_rng(seed)
    num = np.zeros((h, w), dtype=complex)
    den = np.zeros((h, w), dtype=complex)
    variants = [patch] + [_random_affine(patch, rng) for _ in range(n_perturbations)]
    for var in variants:
        f = np.fft.fft2(_preprocess_patch(var))
        num += target * np.conj(f)
        den += f * np.conj(f)
    if regularizer == 0 and float(np.abs(den).max()) < 1e-12:
        raise ValueError("degenerate filter: zero-energy patch with no regularizer")
    return MosseState(
        num=num,
        den=den,
        target_fft=target,
        window_size=(w, h),
        learning_rate=learning_rate,
        regularizer=regularizer,
        psr_threshold=psr_threshold,
        box=BoundingBox(float(x0), float(y0), float(w), float(h)),
        frame_shape=img.shape,
    )


def _peak_and_psr(response: np.ndarray, exclude: int = 11) -> tuple[float, float, float]:
    """Sub-pixel peak location and peak-to-sidelobe ratio of a response map."""
    h, w = response.shape
    py, px = np.unravel_index(int(np.argmax(response)), response.shape)
    peak = float(response[py, px])

    half = exclude // 2
    mask = np.ones_like(response, dtype=bool)
    mask[max(0, py - half) : py + half + 1, max(0, px - half) : px + half + 1] = False
    side = response[mask]
    psr = (peak - float(side.mean())) / (float(side.std()) + 1e-9)

    fx = fy = 0.0
    if 0 < px < w - 1:
        d2 = response[py, px - 1] - 2 * peak + response[py, px + 1]
        if d2 < 0:
            fx = float(np.clip(0.5 * (response[py, px - 1] - response[py, px + 1]) / d2, -0.5, 0.5))
    if 0 < py < h - 1:
        d2 = response[py - 1, px] - 2 * peak + response[py + 1, px]
        if d2 < 0:
            fy = float(np.clip(0.5 * (response[py - 1, px] - response[py + 1, px]) / d2, -0.5, 0.5))
    return px + fx, py + fy, psr


def mosse_update(state: MosseState, frame) -> tuple[BoundingBox, float]:
    """Advance the tracker by one frame; returns the new box and the PSR.

    The box moves to the correlation peak and the filter adapts by running
    average, unless the PSR falls below the failure threshold, in which case
    the box is held and the filter left untouched.
    """
    img = _as_gray(frame)
    if img.shape != state.frame_shape:
        raise ValueError(f"frame shape {img.shape} differs from tracked video {state.frame_shape}")
    w, h = state.window_size
    x0 = int(round(state.box.x))
    y0 = int(round(state.box.y))
    patch = _crop_padded(img, x0, y0, w, h)
    f = np.fft.fft2(_preprocess_patch(patch))
    filt = state.num / (state.den + state.regularizer)
    response = np.real(np.fft.ifft2(filt * f))
    px, py, psr = _peak_and_psr(response)

    if psr >= state.psr_threshold:
        # Peak offsets wrap circularly; map into [-size/2, size/2).
        dx = (px - w // 2 + w / 2.0) % w - w / 2.0
        dy = (py - h // 2 + h / 2.0) % h - h / 2.0
        moved = state.box.shifted(dx, dy).clamped(img.shape[1], img.shape[0])
        state.box = moved
        nx0, ny0 = int(round(moved.x)), int(round(moved.y))
        f_new = np.fft.fft2(_preprocess_patch(_crop_padded(img, nx0, ny0, w, h)))
        lr = state.learning_rate
        state.num = lr * (state.target_fft * np.conj(f_new)) + (1 - lr) * state.num
        state.den = lr * (f_new * np.conj(f_new)) + (1 - lr) * state.den
    return state.box, psr


def read_detections_csv(path) -> dict[int, BoundingBox]:
    """Detections CSV: header ``frame,x,y,w,h``, one row per detected frame."""
    import csv

    with open(path, newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["frame", "x", "y", "w", "h"]:
        raise ValueError(f"bad detections CSV header in {path}: {header}")
    out: dict[int, BoundingBox] = {}
    for row in reader:
        if not row:
            continue
        if len(row) != 5:
            raise ValueError(f"malformed detection row in {path}: {row}")
        frame = int(row[0])
        if frame in out:
            raise ValueError(f"duplicate detection for frame {frame} in {path}")
        out[frame] = BoundingBox(float(row[1]), float(row[2]), float(row[3]), float(row[4]))
    if not out:
        raise ValueError(f"no detections in {path}")
    return out


def write_detections_csv(detections: dict[int, BoundingBox], path) -> None:
    import csv

    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["frame", "x", "y", "w", "h"])
        for frame in sorted(detections):
            b = detections[frame]
            w.writerow([frame, f"{b.x:.2f}", f"{b.y:.2f}", f"{b.w:.2f}", f"{b.h:.2f}"])


def propagate_bbox(seq: FrameSequence, detections: dict[int, BoundingBox], **mosse_kwargs) -> BoxTrack:
    """Spread sparse detections over every frame with MOSSE tracking.

    Each detection owns the frames nearer to it than to any other detection
    (ties go to the earlier detection) and is propagated forward and backward
    through its range with independent tracker instances.
    """
    if not detections:
        raise ValueError("detections map is empty")
    n = seq.n_frames
    det_frames = sorted(detections)
    if det_frames[0] < 0 or det_frames[-1] >= n:
        raise ValueError("detection frame index out of range")

    ranges = []
    for i, f in enumerate(det_frames):
        lo = 0 if i == 0 else (det_frames[i - 1] + f) // 2 + 1
        hi = n - 1 if i == len(det_frames) - 1 else (f + det_frames[i + 1]) // 2
        ranges.append((lo, hi))

    boxes: list[BoundingBox | None] = [None] * n
    for f, (lo, hi) in zip(det_frames, ranges):
        det = detections[f].clamped(seq.width, seq.height)
        boxes[f] = det
        if f < hi:
            state = mosse_init(seq.frame(f), det, **mosse_kwargs)
            for k in range(f + 1, hi + 1):
                box, _ = mosse_update(state, seq.frame(k))
                boxes[k] = box
        if f > lo:
            state = mosse_init(seq.frame(f), det, **mosse_kwargs)
            for k in range(f - 1, lo - 1, -1):
                box, _ = mosse_update(state, seq.frame(k))
                boxes[k] = box
    assert all(b is not None for b in boxes)
    return BoxTrack(boxes=[b.clamped(seq.width, seq.height) for b in boxes])
