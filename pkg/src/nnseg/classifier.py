"""Window scoring: spectral features, a trainable logistic baseline, and
pluggable backends (score-file replay, ONNX inference, built-in baseline).

A Window is the HSV-encoded flow of one 2.5 s clip (25 encoded frames at
10 Hz).  Backends turn a window into a confidence score in [0, 1]; the
thresholding that converts scores into labels lives in the segmenter.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .onnx_model import OnnxModel

#: Feature vector layout produced by extract_features, in order.
FEATURE_NAMES = (
    "mean_mag",        # time average of per-frame mean flow magnitude
    "energy",          # time average of squared per-frame mean magnitude
    "band_low",        # spectral power, 0-1 Hz (DC excluded)
    "band_nns",        # spectral power, 1.5-3 Hz (the sucking band)
    "band_high",       # spectral power, 3-5 Hz
    "nns_ratio",       # band_nns over total non-DC power (0 when motionless)
    "concentration",   # fraction of motion energy in the top 10% of pixels
    "temporal_std",    # std of the per-frame mean magnitude series
)

NNS_BAND_HZ = (1.5, 3.0)
LOW_BAND_HZ = (0.0, 1.0)
HIGH_BAND_HZ = (3.0, 5.0)


@dataclass
class Window:
    """HSV flow frames of one scoring window plus its origin.

    A window spanning ``window_s`` seconds at fps f covers round(window_s*f)+1
    video frames (both ends inclusive) and therefore carries round(window_s*f)
    encoded flow frames, e.g. 26 frames and 25 flow frames for 2.5 s at 10 Hz.
    ``hsv_frames`` may be None for replay backends that only need the origin.
    """

    hsv_frames: np.ndarray | None
    source: str
    start_s: float
    fps: float = 10.0
    window_s: float = 2.5

    def __post_init__(self):
        if self.hsv_frames is not None:
            self.hsv_frames = np.asarray(self.hsv_frames, dtype=np.float32)
            if self.hsv_frames.ndim != 4 or self.hsv_frames.shape[-1] != 3:
                raise ValueError("hsv_frames must be (t, h, w, 3)")
            expected = int(round(self.window_s * self.fps))
            if self.hsv_frames.shape[0] != expected:
                raise ValueError(
                    f"window of {self.window_s}s at {self.fps} fps needs {expected} "
                    f"flow frames, got {self.hsv_frames.shape[0]}"
                )

    @property
    def n_frames(self) -> int:
        return 0 if self.hsv_frames is None else self.hsv_frames.shape[0]

    @property
    def end_s(self) -> float:
        return round(self.start_s + self.window_s, 3)


@dataclass
class WindowScore:
    score: float
    source: str
    start_s: float
    end_s: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0,1], got {self.score}")


def extract_features(window: Window) -> np.ndarray:
    """8-dimensional spectral/spatial feature vector (see FEATURE_NAMES).

    The magnitude signal is the HSV value channel, so windows meant for
    classification should be encoded with a fixed normalization scale to keep
    magnitudes comparable across frames.
    """
    if window.hsv_frames is None:
        raise ValueError("window carries no pixel data")
    mag = window.hsv_frames[..., 2].astype(np.float64)
    m = mag.mean(axis=(1, 2))
    t = len(m)
    spectrum = np.abs(np.fft.rfft(m)) ** 2 / (t * t)
    freqs = np.fft.rfftfreq(t, d=1.0 / window.fps)

    def band(lo, hi):
        sel = (freqs > lo + 1e-9) & (freqs <= hi + 1e-9) & (freqs > 1e-9)
        return float(spectrum[sel].sum())

    band_low = band(*LOW_BAND_HZ)
    band_nns = float(spectrum[(freqs >= NNS_BAND_HZ[0] - 1e-9) & (freqs <= NNS_BAND_HZ[1] + 1e-9)].sum())
    band_high = band(*HIGH_BAND_HZ)
    total_ac = float(spectrum[freqs > 1e-9].sum())
    nns_ratio = band_nns / total_ac if total_ac > 0 else 0.0

    pixel_energy = (mag * mag).sum(axis=0).ravel()
    total_energy = float(pixel_energy.sum())
    if total_energy > 0:
        k = max(1, int(np.ceil(0.1 * pixel_energy.size)))
        top = np.partition(pixel_energy, -k)[-k:]
        concentration = float(top.sum()) / total_energy
    else:
        concentration = 0.0

    return np.array(
        [
            m.mean(),
            (m * m).mean(),
            band_low,
            band_nns,
            band_high,
            nns_ratio,
            concentration,
            m.std(),
        ]
    )


# ---------------------------------------------------------------------------
# logistic baseline


@dataclass
class BaselineModel:
    """Linear logistic model over the fixed feature layout."""

    weights: np.ndarray
    bias: float
    feature_spec: str = " ".join(FEATURE_NAMES)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if len(self.weights) != len(self.feature_spec.split()):
            raise ValueError("weight length does not match feature spec")

    def predict_proba(self, features: np.ndarray) -> float:
        z = float(np.dot(self.weights, features) + self.bias)
        return float(_stable_sigmoid(z))

    def save(self, path) -> None:
        lines = [
            "v1",
            self.feature_spec,
            " ".join(f"{w!r}" for w in self.weights.tolist()),
            repr(float(self.bias)),
        ]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "BaselineModel":
        lines = Path(path).read_text().strip().splitlines()
        if len(lines) < 4 or lines[0].strip() != "v1":
            raise ValueError(f"unrecognized baseline model file: {path}")
        spec = lines[1].strip()
        weights = np.array([float(v) for v in lines[2].split()])
        bias = float(lines[3])
        return cls(weights=weights, bias=bias, feature_spec=spec)


def _stable_sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def train_baseline(
    X: np.ndarray,
    y: np.ndarray,
    lr: float = 0.5,
    epochs: int = 500,
    l2: float = 1e-4,
) -> BaselineModel:
    """Full-batch gradient descent on L2-regularized logistic loss.

    Features are standardized internally so wildly different scales (band
    energies vs ratios) all contribute; the returned weights fold the scaling
    back into raw feature space.  Weights start at zero, so training is
    deterministic.  Requires at least two examples with both classes present.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, d) with matching labels")
    if len(y) < 2 or len(np.unique(y)) < 2:
        raise ValueError("training needs at least two examples covering both classes")
    n, d = X.shape
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd < 1e-12] = 1.0
    Xs = (X - mu) / sd
    w = np.zeros(d)
    b = 0.0
    for _ in range(epochs):
        p = _stable_sigmoid(Xs @ w + b)
        err = p - y
        w -= lr * (Xs.T @ err / n + l2 * w)
        b -= lr * float(err.mean())
    spec = " ".join(FEATURE_NAMES) if d == len(FEATURE_NAMES) else " ".join(f"f{i}" for i in range(d))
    return BaselineModel(
        weights=w / sd, bias=b - float((w * mu / sd).sum()), feature_spec=spec
    )


# ---------------------------------------------------------------------------
# backends


class BaselineBackend:
    """Scores windows with a trained spectral logistic model."""

    def __init__(self, model: BaselineModel):
        self.model = model

    def score_window(self, window: Window) -> float:
        return self.model.predict_proba(extract_features(window))


class ScoreFileBackend:
    """Replays scores from a CSV; lookup is exact on (source, start in ms)."""

    def __init__(self, path):
        self.path = Path(path)
        self.scores: dict[tuple[str, int], float] = {}
        rows = read_scores(self.path)
        for source, start_s, end_s, score in rows:
            key = (source, int(round(start_s * 1000)))
            if key in self.scores:
                raise ValueError(f"duplicate score entry for {source} at {start_s}s")
            self.scores[key] = score

    def score_window(self, window: Window) -> float:
        key = (window.source, int(round(window.start_s * 1000)))
        if key not in self.scores:
            raise KeyError(
                f"no score for source={window.source!r} start={window.start_s}s in {self.path}"
            )
        return self.scores[key]


class OnnxBackend:
    """Runs an exported ONNX window classifier with the bundled evaluator.

    Expects a sidecar metadata file (``<model>.meta`` next to the model, or
    ``model.meta`` in the same directory) declaring ``input_size``,
    ``frames`` and ``emits=logit|probability``.  Input windows must match the
    declared geometry exactly; there is no silent resizing.
    """

    def __init__(self, model_path):
        self.model_path = Path(model_path)
        self.model = OnnxModel.load(self.model_path)
        meta = self._find_meta(self.model_path)
        self.input_size = int(meta["input_size"])
        self.frames = int(meta["frames"])
        self.emits = meta["emits"]
        if self.emits not in ("logit", "probability"):
            raise ValueError(f"model.meta emits must be logit|probability, got {self.emits!r}")
        inputs = self.model.input_info
        if len(inputs) != 1:
            raise ValueError(f"expected a single graph input, found {len(inputs)}")
        self.input_name = inputs[0][0]

    @staticmethod
    def _find_meta(model_path: Path) -> dict:
        candidates = [model_path.with_suffix(".meta"), model_path.parent / "model.meta"]
        for cand in candidates:
            if cand.is_file():
                meta = {}
                for line in cand.read_text().splitlines():
                    line = line.strip()
                    if line and "=" in line:
                        k, v = line.split("=", 1)
                        meta[k.strip()] = v.strip()
                for key in ("input_size", "frames", "emits"):
                    if key not in meta:
                        raise ValueError(f"{cand} is missing required key {key!r}")
                return meta
        raise FileNotFoundError(f"no metadata sidecar found for {model_path}")

    def score_window(self, window: Window) -> float:
        if window.hsv_frames is None:
            raise ValueError("window carries no pixel data")
        t, h, w, _ = window.hsv_frames.shape
        if t != self.frames or h != self.input_size or w != self.input_size:
            raise ValueError(
                f"window shape ({t} frames, {h}x{w}) does not match model "
                f"({self.frames} frames, {self.input_size}x{self.input_size})"
            )
        x = np.transpose(window.hsv_frames, (0, 3, 1, 2))[None].astype(np.float32)
        outputs = self.model.run({self.input_name: x})
        raw = float(np.asarray(next(iter(outputs.values()))).reshape(-1)[0])
        if self.emits == "logit":
            return float(_stable_sigmoid(raw))
        if not (-1e-3 <= raw <= 1 + 1e-3):
            raise ValueError(f"model declared probabilities but emitted {raw}")
        return float(np.clip(raw, 0.0, 1.0))


def classify_window(backend, window: Window) -> WindowScore:
    """Score one window with any backend; result is always in [0, 1]."""
    score = float(backend.score_window(window))
    if not np.isfinite(score) or not (0.0 <= score <= 1.0):
        raise ValueError(f"backend produced an invalid score: {score}")
    return WindowScore(score=score, source=window.source, start_s=round(window.start_s, 3), end_s=window.end_s)


# ---------------------------------------------------------------------------
# score CSV interchange


def write_scores(scores: list[WindowScore], path, header_comment: str | None = None) -> None:
    with open(path, "w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        writer = csv.writer(f)
        writer.writerow(["source", "start_s", "end_s", "score"])
        for s in scores:
            writer.writerow([s.source, f"{s.start_s:.3f}", f"{s.end_s:.3f}", f"{s.score:.6f}"])


def read_scores(path) -> list[tuple[str, float, float, float]]:
    rows = []
    with open(path, newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["source", "start_s", "end_s", "score"]:
        raise ValueError(f"bad score CSV header in {path}: {header}")
    for row in reader:
        if not row:
            continue
        if len(row) != 4:
            raise ValueError(f"malformed score row in {path}: {row}")
        source, start_s, end_s, score = row[0], float(row[1]), float(row[2]), float(row[3])
        if not (0.0 <= score <= 1.0):
            raise ValueError(f"score out of range in {path}: {score}")
        rows.append((source, start_s, end_s, score))
    return rows
