import csv

import numpy as np
import pytest
import torch

from nns_trainer.data import FlowClipSet, read_manifest
from nns_trainer.model import WindowClassifier
from nns_trainer.train import TrainConfig, train_and_export

from nnseg.classifier import OnnxBackend, Window, classify_window
from nnseg.metrics import binary_accuracy


@pytest.fixture(scope="session")
def trained(clip_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("model") / "model.onnx"
    cfg = TrainConfig(
        train_manifest=str(clip_corpus["train"]),
        val_manifest=str(clip_corpus["val"]),
        out_path=str(out),
        epochs=20,
        learning_rate=1e-3,
        batch_size=8,
        seed=0,
    )
    return cfg, train_and_export(cfg)


class TestData:
    def test_manifest_rejects_mixed_class(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("source,start_s,length_s,class\nflow,0.0,2.5,mixed\n")
        with pytest.raises(ValueError, match="nns"):
            read_manifest(p)

    def test_manifest_rejects_bad_header(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError, match="header"):
            read_manifest(p)

    def test_single_class_rejected(self, clip_corpus, tmp_path):
        rows = [r for r in open(clip_corpus["train"]) if ",nns" in r or r.startswith("source")]
        p = tmp_path / "single.csv"
        p.write_text("".join(rows))
        clips = read_manifest(p)
        # sources are relative to the manifest; re-anchor next to the corpus
        clips = [
            type(c)(clip_corpus["train"].parent / c.flow_dir.name, c.start_s, c.length_s, c.label)
            for c in clips
        ]
        with pytest.raises(ValueError, match="single class"):
            FlowClipSet(clips)

    def test_clipset_shapes(self, clip_corpus):
        clips = read_manifest(clip_corpus["val"])
        dataset = FlowClipSet(clips)
        assert dataset.x.shape == (40, 25, 3, 48, 48)
        assert dataset.frames == 25
        assert dataset.input_size == 48
        assert set(np.unique(dataset.y)) == {0.0, 1.0}


class TestModel:
    def test_input_size_must_divide(self):
        with pytest.raises(ValueError):
            WindowClassifier(input_size=50)

    def test_forward_shape(self):
        model = WindowClassifier(input_size=32)
        out = model(torch.zeros(2, 25, 3, 32, 32))
        assert out.shape == (2,)


class TestTrainAndExport:
    def test_epochs_zero_rejected(self, clip_corpus):
        with pytest.raises(ValueError, match="epochs"):
            TrainConfig(
                train_manifest=str(clip_corpus["train"]),
                val_manifest=str(clip_corpus["val"]),
                epochs=0,
            )

    def test_val_accuracy_gate(self, trained):
        _, result = trained
        assert result.val_accuracy >= 0.90

    def test_meta_sidecar_contents(self, trained):
        _, result = trained
        text = result.meta_path.read_text()
        assert "input_size=48" in text
        assert "frames=25" in text
        assert "emits=probability" in text

    def test_roundtrip_accuracy_in_primary_backend(self, trained, clip_corpus):
        _, result = trained
        backend = OnnxBackend(result.model_path)
        test_set = FlowClipSet(read_manifest(clip_corpus["test"]))
        scores = []
        for k in range(len(test_set)):
            hsv = np.transpose(test_set.x[k], (0, 2, 3, 1))
            w = Window(hsv, source="test", start_s=0.0)
            scores.append(classify_window(backend, w).score)
        assert all(0.0 <= s <= 1.0 for s in scores)
        assert binary_accuracy(scores, test_set.y.astype(int)) >= 0.90

    def test_onnx_matches_torch_within_1e4(self, trained, clip_corpus):
        _, result = trained
        backend = OnnxBackend(result.model_path)
        test_set = FlowClipSet(read_manifest(clip_corpus["test"]))
        module = result.module.eval()
        with torch.no_grad():
            reference = torch.sigmoid(module(torch.from_numpy(test_set.x))).numpy()
        for k in range(len(test_set)):
            hsv = np.transpose(test_set.x[k], (0, 2, 3, 1))
            got = backend.score_window(Window(hsv, source="t", start_s=0.0))
            assert abs(got - float(reference[k])) <= 1e-4

    def test_shape_mismatch_rejected_by_backend(self, trained):
        _, result = trained
        backend = OnnxBackend(result.model_path)
        wrong = Window(np.zeros((25, 32, 32, 3), dtype=np.float32), "t", 0.0)
        with pytest.raises(ValueError, match="does not match model"):
            backend.score_window(wrong)


class TestCli:
    def test_cli_trains_and_exports(self, clip_corpus, tmp_path):
        from nns_trainer.train import main

        out = tmp_path / "cli_model.onnx"
        code = main(
            [
                "--train-manifest", str(clip_corpus["train"]),
                "--val-manifest", str(clip_corpus["val"]),
                "--out", str(out),
                "--epochs", "1",
                "--lr", "1e-3",
            ]
        )
        assert code == 0
        assert out.exists() and out.with_suffix(".meta").exists()

    def test_cli_reports_missing_manifest(self, tmp_path):
        from nns_trainer.train import main

        assert main(
            ["--train-manifest", str(tmp_path / "nope.csv"), "--val-manifest", str(tmp_path / "nope.csv")]
        ) == 1
