"""End to end: segment a long clip into events and score them against truth.

Runs the smoothed aggregation (sliding 2.5 s windows, scores assigned to
their central half second, 2.5 s moving average, threshold) and reports
event-level precision/recall at IoU thresholds 0.1/0.3/0.5, plus the
inter-coder agreement number for the prediction treated as a second coder.
Run 04_train_baseline.py first to produce demo_output/baseline.txt.
"""

from pathlib import Path

from nnseg import SegmentConfig, SynthSpec, generate_video
from nnseg.classifier import BaselineBackend, BaselineModel
from nnseg.metrics import ap_ar_report, cohen_kappa_incidence, write_report_csv
from nnseg.segmenter import render_timeline_svg, segment_video, write_events

out_dir = Path("demo_output")
model = BaselineModel.load(out_dir / "baseline.txt")
backend = BaselineBackend(model)

spec = SynthSpec(
    duration_s=60.0, frame_size=64, bursts=[5.0, 21.0, 40.0], sucks_min=6, sucks_max=12,
    suck_amplitude_px=2.0, noise_std=0.003, seed=50,
)
seq, annotations = generate_video(spec)

events, track = segment_video(
    seq, backend, SegmentConfig(mode="smoothed", threshold=0.5), source="demo60s"
)
write_events({"demo60s": events}, out_dir / "events.csv")
render_timeline_svg({"demo60s": (annotations.events, events)}, out_dir / "timeline.svg")

report = ap_ar_report({"demo": [(events, annotations.events)]})
write_report_csv(report, out_dir / "report.csv")
kappa = cohen_kappa_incidence(events, annotations.events, spec.duration_s)

print("ground truth:", [(e.start_s, e.end_s) for e in annotations.events])
print("predicted   :", [(e.start_s, e.end_s) for e in events])
for t in report.thresholds:
    print(f"  IoU>={t:g}: precision={report.ap[t]:.3f} recall={report.ar[t]:.3f}")
print(f"  10 s incidence agreement: kappa={kappa:.3f}")
print(f"artifacts in {out_dir}: events.csv, timeline.svg, report.csv")
