"""nnseg: detection and temporal segmentation of non-nutritive sucking
(NNS) events in infant video.

The pipeline stabilizes a face crop, encodes motion as HSV dense optical
flow, scores short windows with a pluggable classifier backend, aggregates
window scores into labeled time intervals, and evaluates them against coder
annotations.
"""

from .annotations import AnnotationSet, ClipEntry, ClipManifest, parse_annotations, sample_clips, write_annotations
from .classifier import (
    BaselineBackend,
    BaselineModel,
    OnnxBackend,
    ScoreFileBackend,
    Window,
    WindowScore,
    classify_window,
    extract_features,
    train_baseline,
)
from .metrics import (
    EvalReport,
    ap_ar_report,
    binary_accuracy,
    cohen_kappa_incidence,
    interval_iou,
    match_events,
    precision_recall,
)
from .optical_flow import FlowField, FlowParams, FlowSequence, clip_flow_encode, dense_flow, flow_to_hsv
from .segmenter import (
    Event,
    SegmentConfig,
    SegmentTrack,
    WindowSpec,
    aggregate,
    cover_windows,
    extract_events,
    segment_scores,
    segment_video,
)
from .stabilizer import AugmentParams, augment, build_box_track, estimate_trajectory, smooth_trajectory, stabilized_crop
from .synth import SynthSpec, generate_video
from .tracker import (
    BoundingBox,
    BoxTrack,
    CornerSet,
    MosseState,
    detect_corners,
    lk_track,
    mosse_init,
    mosse_update,
    propagate_bbox,
)
from .video_io import Frame, FrameSequence, load_sequence, resample_fps, write_sequence

__version__ = "0.1.0"
