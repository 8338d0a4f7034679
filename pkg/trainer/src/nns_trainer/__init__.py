"""Trainer for the spatiotemporal NNS window classifier (ONNX export)."""

from .data import FlowClipSet, read_manifest
from .model import WindowClassifier
from .onnx_export import export_onnx, write_meta
from .train import TrainConfig, TrainResult, train_and_export

__version__ = "0.1.0"
