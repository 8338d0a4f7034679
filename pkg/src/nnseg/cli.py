"""Batch command-line front end.

Subcommands: synth, stabilize, flow, classify, segment, evaluate,
sample-clips, kappa.  Options can come from a flat ``key=value`` config file
(``--config``); explicit flags override file values, which override built-in
defaults.  All randomness is controlled by ``--seed`` and artifacts embed the
resolved configuration in a leading comment, so reruns are byte-identical.

Exit status: 0 on success, 1 on validation errors, 2 on I/O errors.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import annotations as ann_mod
from . import classifier as clf
from . import metrics as metrics_mod
from . import optical_flow as flow_mod
from . import segmenter as seg_mod
from . import stabilizer as stab_mod
from . import synth as synth_mod
from . import tracker as trk
from . import video_io

#: Recognized config-file keys and their parsers (the config schema).
CONFIG_SCHEMA = {
    "mode": str,
    "threshold": float,
    "window_s": float,
    "stride_s": float,
    "min_dur_s": float,
    "merge_gap_s": float,
    "hsv_max_mag": float,
    "smooth_window_s": float,
    "margin": float,
    "crop_size": int,
    "flow_levels": int,
    "flow_scale": float,
    "flow_window": int,
    "flow_iterations": int,
    "flow_poly_n": int,
    "flow_poly_sigma": float,
    "backend": str,
    "seed": int,
    "jobs": int,
    "fps": float,
}

DEFAULTS = {
    "mode": "smoothed",
    "threshold": 0.5,
    "window_s": 2.5,
    "stride_s": 0.5,
    "min_dur_s": 0.5,
    "merge_gap_s": 0.0,
    "hsv_max_mag": 4.0,
    "smooth_window_s": 1.5,
    "margin": 0.1,
    "crop_size": 112,
    "flow_levels": 3,
    "flow_scale": 0.5,
    "flow_window": 15,
    "flow_iterations": 3,
    "flow_poly_n": 5,
    "flow_poly_sigma": 1.1,
    "backend": None,
    "seed": 0,
    "jobs": 1,
    "fps": None,
}


def load_config_file(path) -> dict:
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {raw!r}")
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in CONFIG_SCHEMA:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = CONFIG_SCHEMA[key](val)
    return values


class Options:
    """Merged view of CLI flags over config-file values over defaults."""

    def __init__(self, args: argparse.Namespace):
        self._file = load_config_file(args.config) if getattr(args, "config", None) else {}
        self._args = vars(args)

    def get(self, key: str):
        flag = self._args.get(key)
        if flag is not None:
            return flag
        if key in self._file:
            return self._file[key]
        return DEFAULTS.get(key)

    def describe(self, keys) -> str:
        return " ".join(f"{k}={self.get(k)}" for k in sorted(keys))


def _flow_params(opts: Options) -> flow_mod.FlowParams:
    return flow_mod.FlowParams(
        levels=opts.get("flow_levels"),
        scale=opts.get("flow_scale"),
        window=opts.get("flow_window"),
        iterations=opts.get("flow_iterations"),
        poly_n=opts.get("flow_poly_n"),
        poly_sigma=opts.get("flow_poly_sigma"),
    )


def _segment_config(opts: Options) -> seg_mod.SegmentConfig:
    return seg_mod.SegmentConfig(
        mode=opts.get("mode"),
        threshold=opts.get("threshold"),
        window_s=opts.get("window_s"),
        stride_s=opts.get("stride_s"),
        min_dur_s=opts.get("min_dur_s"),
        merge_gap_s=opts.get("merge_gap_s"),
        hsv_max_mag=opts.get("hsv_max_mag"),
        flow=_flow_params(opts),
    )


def make_backend(spec: str):
    """Build a scoring backend from ``kind:path`` (scorefile|baseline|onnx)."""
    if spec is None:
        raise ValueError("no backend given (use --backend kind:path)")
    if ":" not in spec:
        raise ValueError(f"backend must look like kind:path, got {spec!r}")
    kind, path = spec.split(":", 1)
    if kind == "scorefile":
        return clf.ScoreFileBackend(path)
    if kind == "baseline":
        return clf.BaselineBackend(clf.BaselineModel.load(path))
    if kind == "onnx":
        return clf.OnnxBackend(path)
    raise ValueError(f"unknown backend kind {kind!r} (scorefile|baseline|onnx)")


def _score_windows(backend, windows, jobs: int):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda w: clf.classify_window(backend, w), windows))
    return [clf.classify_window(backend, w) for w in windows]


def _parse_bbox(text: str) -> tuple[int, trk.BoundingBox]:
    frame = 0
    if "@" in text:
        text, frame_s = text.split("@", 1)
        frame = int(frame_s)
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 4:
        raise ValueError("--bbox must be x,y,w,h or x,y,w,h@frame")
    return frame, trk.BoundingBox(*parts)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    opts = Options(args)
    spec = synth_mod.read_spec_file(args.spec)
    if args.seed is not None:
        from dataclasses import replace

        spec = replace(spec, seed=args.seed)
    seq, ann = synth_mod.generate_video(spec)
    out = Path(args.out)
    video_io.write_sequence(seq, out, fmt=args.format)
    ann_mod.write_annotations(ann, out / "annotations.csv")
    print(f"wrote {seq.n_frames} frames and annotations to {out}")
    return 0


def cmd_stabilize(args) -> int:
    opts = Options(args)
    seq = video_io.load_sequence(args.in_dir, declared_fps=opts.get("fps"))
    if args.detections:
        detections = trk.read_detections_csv(args.detections)
    elif args.bbox:
        frame, box = _parse_bbox(args.bbox)
        detections = {frame: box}
    else:
        raise ValueError("stabilize needs --detections or --bbox")
    track = stab_mod.build_box_track(seq, detections, smooth_window_s=opts.get("smooth_window_s"))
    out_seq = stab_mod.stabilized_crop(
        seq, track, margin=opts.get("margin"), out_size=opts.get("crop_size")
    )
    video_io.write_sequence(out_seq, args.out, fmt=args.format)
    print(f"wrote stabilized crop ({out_seq.n_frames} frames) to {args.out}")
    return 0


def cmd_flow(args) -> int:
    opts = Options(args)
    seq = video_io.load_sequence(args.in_dir, declared_fps=opts.get("fps"))
    max_mag = None if args.per_frame_norm else opts.get("hsv_max_mag")
    flows = flow_mod.clip_flow_encode(seq, _flow_params(opts), max_mag=max_mag)
    flow_mod.save_hsv_frames(flows, args.out)
    if args.flo:
        flo_dir = Path(args.flo)
        flo_dir.mkdir(parents=True, exist_ok=True)
        for i, fld in enumerate(flows.fields):
            flow_mod.write_flo(fld, flo_dir / f"flow_{i:06d}.flo")
    print(f"wrote {len(flows.fields)} flow frames to {args.out}")
    return 0


def cmd_classify(args) -> int:
    opts = Options(args)
    backend = make_backend(opts.get("backend"))
    seq = video_io.load_sequence(args.in_dir, declared_fps=opts.get("fps"))
    source = args.source or Path(args.in_dir).name
    flows = flow_mod.clip_flow_encode(seq, _flow_params(opts), max_mag=opts.get("hsv_max_mag"))
    span = round((seq.n_frames - 1) / seq.fps, 3)
    windows = seg_mod.windows_from_flow(
        flows.hsv_frames,
        seq.fps,
        span,
        source,
        "sliding",
        opts.get("window_s"),
        opts.get("stride_s"),
    )
    scores = _score_windows(backend, windows, opts.get("jobs"))
    keys = ("backend", "window_s", "stride_s", "hsv_max_mag", "seed")
    clf.write_scores(scores, args.out, header_comment="nnseg classify " + opts.describe(keys))
    print(f"wrote {len(scores)} window scores to {args.out}")
    return 0


def cmd_segment(args) -> int:
    opts = Options(args)
    backend = make_backend(opts.get("backend"))
    config = _segment_config(opts)
    if args.in_dir:
        seq = video_io.load_sequence(args.in_dir, declared_fps=opts.get("fps"))
        source = args.source or Path(args.in_dir).name
        events, _ = seg_mod.segment_video(seq, backend, config, source=source)
    else:
        if args.duration is None or args.source is None:
            raise ValueError("score-only segmentation needs --duration and --source")
        events, _ = seg_mod.segment_scores(backend, args.source, args.duration, config)
        source = args.source
    keys = ("backend", "mode", "threshold", "window_s", "stride_s", "min_dur_s", "merge_gap_s")
    seg_mod.write_events({source: events}, args.out, header_comment="nnseg segment " + opts.describe(keys))
    if args.svg:
        gt = []
        if args.gt:
            gt = ann_mod.parse_annotations(args.gt).with_label("nns")
        seg_mod.render_timeline_svg({source: (gt, events)}, args.svg)
    print(f"wrote {len(events)} events to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    opts = Options(args)
    pred = seg_mod.read_events(args.pred)
    gt = seg_mod.read_events(args.gt)
    thresholds = tuple(float(t) for t in args.thresholds.split(","))
    per_subject: dict[str, list[tuple[list, list]]] = {}
    for source in sorted(set(pred) | set(gt)):
        subject = source.split("/")[0]
        per_subject.setdefault(subject, []).append((pred.get(source, []), gt.get(source, [])))
    report = metrics_mod.ap_ar_report(per_subject, thresholds)
    metrics_mod.write_report_csv(
        report, args.out, header_comment=f"nnseg evaluate thresholds={args.thresholds}"
    )
    for t in thresholds:
        print(f"t={t:g} AP={report.ap[t]:.4f} AR={report.ar[t]:.4f}")
    return 0


def cmd_sample_clips(args) -> int:
    opts = Options(args)
    ann = ann_mod.parse_annotations(args.ann)
    manifest = ann_mod.sample_clips(
        ann,
        n_pos=args.n_pos,
        n_neg=args.n_neg,
        clip_s=args.clip_s,
        n_mixed=args.n_mixed,
        mixed_clip_s=args.mixed_s,
        seed=opts.get("seed"),
    )
    keys = ("seed",)
    ann_mod.write_manifest(
        manifest,
        args.out,
        header_comment=f"nnseg sample-clips n_pos={args.n_pos} n_neg={args.n_neg} "
        f"n_mixed={args.n_mixed} clip_s={args.clip_s} mixed_s={args.mixed_s} " + opts.describe(keys),
    )
    print(f"wrote {len(manifest.entries)} clips to {args.out}")
    return 0


def cmd_kappa(args) -> int:
    a = ann_mod.parse_annotations(args.a)
    b = ann_mod.parse_annotations(args.b)
    if abs(a.duration_s - b.duration_s) > 1e-6:
        raise ValueError(
            f"annotation durations differ: {a.duration_s} vs {b.duration_s}"
        )
    kappa = metrics_mod.cohen_kappa_incidence(
        a.with_label(args.label), b.with_label(args.label), a.duration_s, window_s=args.window_s
    )
    print(f"kappa={kappa:.6f}")
    if args.out:
        Path(args.out).write_text(f"kappa={kappa:.6f}\n")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nnseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="subcommand")

    def common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None, help="random seed")
        p.add_argument("--jobs", type=int, default=None, help="parallel workers")

    p = sub.add_parser("synth", help="render a synthetic test video")
    common(p)
    p.add_argument("--spec", required=True, help="synthesis spec file")
    p.add_argument("--out", required=True, help="output frame directory")
    p.add_argument("--format", default="pgm", choices=("pgm", "png"))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stabilize", help="stabilized face crop of a frame directory")
    common(p)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--detections", help="detections CSV (frame,x,y,w,h)")
    p.add_argument("--bbox", help="seed box x,y,w,h[@frame]")
    p.add_argument("--fps", type=float, default=None)
    p.add_argument("--smooth-window-s", dest="smooth_window_s", type=float, default=None)
    p.add_argument("--margin", type=float, default=None)
    p.add_argument("--crop-size", dest="crop_size", type=int, default=None)
    p.add_argument("--format", default="pgm", choices=("pgm", "png"))
    p.set_defaults(func=cmd_stabilize)

    p = sub.add_parser("flow", help="dense flow + HSV encoding of a frame directory")
    common(p)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True, help="HSV flow frame directory")
    p.add_argument("--flo", help="also dump raw .flo files here")
    p.add_argument("--fps", type=float, default=None)
    p.add_argument("--per-frame-norm", action="store_true", help="per-frame value scaling")
    p.add_argument("--hsv-max-mag", dest="hsv_max_mag", type=float, default=None)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("classify", help="score sliding windows of a video")
    common(p)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True, help="score CSV path")
    p.add_argument("--backend", default=None, help="kind:path (scorefile|baseline|onnx)")
    p.add_argument("--source", default=None, help="source id in the CSV (default: dir name)")
    p.add_argument("--fps", type=float, default=None)
    p.add_argument("--window-s", dest="window_s", type=float, default=None)
    p.add_argument("--stride-s", dest="stride_s", type=float, default=None)
    p.add_argument("--hsv-max-mag", dest="hsv_max_mag", type=float, default=None)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("segment", help="aggregate window scores into events")
    common(p)
    p.add_argument("--in", dest="in_dir", help="input frame directory")
    p.add_argument("--duration", type=float, help="duration (s) when using scores only")
    p.add_argument("--source", default=None, help="source id")
    p.add_argument("--out", required=True, help="event CSV path")
    p.add_argument("--svg", help="also render an SVG timeline here")
    p.add_argument("--gt", help="annotation CSV for the SVG ground-truth lane")
    p.add_argument("--backend", default=None, help="kind:path (scorefile|baseline|onnx)")
    p.add_argument("--mode", default=None, choices=seg_mod.MODES)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--fps", type=float, default=None)
    p.add_argument("--window-s", dest="window_s", type=float, default=None)
    p.add_argument("--stride-s", dest="stride_s", type=float, default=None)
    p.add_argument("--min-dur-s", dest="min_dur_s", type=float, default=None)
    p.add_argument("--merge-gap-s", dest="merge_gap_s", type=float, default=None)
    p.add_argument("--hsv-max-mag", dest="hsv_max_mag", type=float, default=None)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("evaluate", help="precision/recall report for event CSVs")
    common(p)
    p.add_argument("--pred", required=True, help="predicted events CSV")
    p.add_argument("--gt", required=True, help="ground-truth events CSV")
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--thresholds", default="0.1,0.3,0.5")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sample-clips", help="draw clips from an annotation file")
    common(p)
    p.add_argument("--ann", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-pos", dest="n_pos", type=int, default=0)
    p.add_argument("--n-neg", dest="n_neg", type=int, default=0)
    p.add_argument("--clip-s", dest="clip_s", type=float, default=2.5)
    p.add_argument("--n-mixed", dest="n_mixed", type=int, default=0)
    p.add_argument("--mixed-s", dest="mixed_s", type=float, default=60.0)
    p.set_defaults(func=cmd_sample_clips)

    p = sub.add_parser("kappa", help="inter-coder agreement on incidence windows")
    common(p)
    p.add_argument("--a", required=True, help="annotation CSV, coder A")
    p.add_argument("--b", required=True, help="annotation CSV, coder B")
    p.add_argument("--window-s", dest="window_s", type=float, default=10.0)
    p.add_argument("--label", default="nns", choices=ann_mod.LABELS)
    p.add_argument("--out", help="optional output text file")
    p.set_defaults(func=cmd_kappa)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if not getattr(args, "command", None):
        parser.print_help()
        return 1
    try:
        return args.func(args)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
