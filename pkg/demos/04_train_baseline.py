"""Train the spectral logistic baseline on synthetic windows.

Each 2.5 s window is summarized by eight features of its flow-magnitude
signal (band energies around the 2 Hz sucking rhythm, spatial concentration,
temporal statistics); a logistic model on top separates bursts from
static/drift content.  The trained model is saved in the plain-text format
the CLI's baseline backend loads.
"""

from pathlib import Path

import numpy as np

from nnseg import SynthSpec, generate_video, train_baseline
from nnseg.classifier import BaselineBackend, Window, classify_window, extract_features
from nnseg.optical_flow import clip_flow_encode

out_path = Path("demo_output/baseline.txt")
out_path.parent.mkdir(parents=True, exist_ok=True)
FPS = 10.0


def windows(seq, starts):
    hsv = clip_flow_encode(seq, max_mag=4.0).hsv_frames
    return [
        Window(np.stack(hsv[int(round(s * FPS)) : int(round(s * FPS)) + 25]), "demo", s)
        for s in starts
    ]


# positives: windows fully inside bursts; negatives: quiet and drifting clips
burst_seq, burst_ann = generate_video(
    SynthSpec(duration_s=30.0, frame_size=64, bursts=[1.0, 9.0, 17.0, 25.0],
              sucks_min=8, sucks_max=8, noise_std=0.003, seed=1)
)
pos_starts = [round(ev.start_s + d, 2) for ev in burst_ann.events for d in (0.0, 0.5, 1.0)]
static_seq, _ = generate_video(
    SynthSpec(duration_s=16.0, frame_size=64, bursts=[], noise_std=0.004, seed=2)
)
drift_seq, _ = generate_video(
    SynthSpec(duration_s=16.0, frame_size=64, bursts=[], jitter_std_px=0.3, noise_std=0.003, seed=3)
)
neg_starts = [round(0.5 * k, 1) for k in range(12)]

pos = windows(burst_seq, pos_starts)
neg = windows(static_seq, neg_starts[:6]) + windows(drift_seq, neg_starts[:6])

X = np.array([extract_features(w) for w in pos + neg])
y = np.array([1] * len(pos) + [0] * len(neg))
model = train_baseline(X, y, lr=0.5, epochs=800, l2=1e-4)
model.save(out_path)

backend = BaselineBackend(model)
pos_scores = [classify_window(backend, w).score for w in pos]
neg_scores = [classify_window(backend, w).score for w in neg]
print(f"saved model to {out_path}")
print(f"burst windows score  {min(pos_scores):.3f} .. {max(pos_scores):.3f}")
print(f"quiet windows score  {min(neg_scores):.3f} .. {max(neg_scores):.3f}")
