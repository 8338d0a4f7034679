"""Training loop and ONNX export for the window classifier."""

from __future__ import annotations

import argparse
import copy
import sys
from dataclasses import dataclass
from pathlib import Path

import torch

from .data import FlowClipSet, read_manifest
from .model import WindowClassifier
from .onnx_export import export_onnx, write_meta


@dataclass
class TrainResult:
    model_path: Path
    meta_path: Path
    val_accuracy: float
    module: WindowClassifier  # the trained torch module, for parity checks


@dataclass
class TrainConfig:
    train_manifest: str
    val_manifest: str
    out_path: str = "model.onnx"
    epochs: int = 20
    learning_rate: float = 1e-4
    batch_size: int = 8
    input_size: int | None = None  # inferred from the clips when None
    hidden: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("learning_rate and batch_size must be positive")


def _accuracy(model: WindowClassifier, x: torch.Tensor, y: torch.Tensor, batch: int) -> float:
    model.eval()
    hits = 0
    with torch.no_grad():
        for i in range(0, len(x), batch):
            logits = model(x[i : i + batch])
            hits += int(((logits >= 0) == (y[i : i + batch] >= 0.5)).sum())
    return hits / len(x)


def train_and_export(cfg: TrainConfig) -> TrainResult:
    """Train, pick the best epoch by validation accuracy, export ONNX + meta.

    Deterministic per seed up to framework nondeterminism (single-threaded
    CPU training is reproducible in practice).
    """
    torch.manual_seed(cfg.seed)
    train_set = FlowClipSet(read_manifest(cfg.train_manifest))
    val_set = FlowClipSet(read_manifest(cfg.val_manifest))
    if val_set.frames != train_set.frames or val_set.input_size != train_set.input_size:
        raise ValueError(
            f"train/val clip shapes differ: {train_set.x.shape[1:]} vs {val_set.x.shape[1:]}"
        )
    size = train_set.input_size
    if cfg.input_size is not None and cfg.input_size != size:
        raise ValueError(f"clips are {size}px but config demands {cfg.input_size}px")

    x_train = torch.from_numpy(train_set.x)
    y_train = torch.from_numpy(train_set.y)
    x_val = torch.from_numpy(val_set.x)
    y_val = torch.from_numpy(val_set.y)

    model = WindowClassifier(input_size=size, hidden=cfg.hidden)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    loss_fn = torch.nn.BCEWithLogitsLoss()
    sampler = torch.Generator().manual_seed(cfg.seed)

    best_acc = -1.0
    best_state = None
    for epoch in range(cfg.epochs):
        model.train()
        order = torch.randperm(len(x_train), generator=sampler)
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i : i + cfg.batch_size]
            optimizer.zero_grad()
            loss = loss_fn(model(x_train[idx]), y_train[idx])
            loss.backward()
            optimizer.step()
        acc = _accuracy(model, x_val, y_val, cfg.batch_size)
        if acc > best_acc:
            best_acc = acc
            best_state = copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)

    out = Path(cfg.out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    model_path = export_onnx(model, frames=train_set.frames, path=out)
    meta_path = write_meta(out.with_suffix(".meta"), input_size=size, frames=train_set.frames)
    return TrainResult(model_path, meta_path, best_acc, model)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nns-trainer", description=__doc__)
    parser.add_argument("--train-manifest", required=True)
    parser.add_argument("--val-manifest", required=True)
    parser.add_argument("--out", default="model.onnx")
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--lr", type=float, default=1e-4)
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--hidden", type=int, default=32)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    try:
        cfg = TrainConfig(
            train_manifest=args.train_manifest,
            val_manifest=args.val_manifest,
            out_path=args.out,
            epochs=args.epochs,
            learning_rate=args.lr,
            batch_size=args.batch_size,
            hidden=args.hidden,
            seed=args.seed,
        )
        result = train_and_export(cfg)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"exported {result.model_path} (+ {result.meta_path}), "
        f"best val accuracy {result.val_accuracy:.3f}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
