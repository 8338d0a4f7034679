"""ONNX serialization of the trained window classifier.

The environment provides neither the onnx package nor onnxruntime, so the
protobuf wire format is written directly.  The exported graph uses plain
opset-13 operators (Conv, Relu, AveragePool, GlobalAveragePool, LSTM, Gemm,
Sigmoid, Reshape) with a fixed batch size of 1, gate order converted from
torch's i,f,g,o to ONNX's i,o,f,c.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .model import CHANNELS, WindowClassifier

_DTYPE_FLOAT = 1
_DTYPE_INT64 = 7


def _varint(value: int) -> bytes:
    if value < 0:
        value += 1 << 64
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _tag(field: int, wire: int) -> bytes:
    return _varint((field << 3) | wire)


def _blob(field: int, payload: bytes) -> bytes:
    return _tag(field, 2) + _varint(len(payload)) + payload


def _string(field: int, text: str) -> bytes:
    return _blob(field, text.encode("utf-8"))


def _int(field: int, value: int) -> bytes:
    return _tag(field, 0) + _varint(value)


def _tensor(name: str, arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr)
    dtype = _DTYPE_INT64 if arr.dtype == np.int64 else _DTYPE_FLOAT
    out = b"".join(_int(1, d) for d in arr.shape)
    out += _int(2, dtype)
    out += _string(8, name)
    out += _blob(9, arr.astype(arr.dtype.newbyteorder("<")).tobytes())
    return out


def _attr_int(name: str, value: int) -> bytes:
    return _string(1, name) + _int(3, value) + _int(20, 2)


def _attr_ints(name: str, values) -> bytes:
    return _string(1, name) + b"".join(_int(8, v) for v in values) + _int(20, 7)


def _node(op: str, inputs, outputs, attrs=()) -> bytes:
    out = b"".join(_string(1, i) for i in inputs)
    out += b"".join(_string(2, o) for o in outputs)
    out += _string(4, op)
    out += b"".join(_blob(5, a) for a in attrs)
    return out


def _value_info(name: str, shape) -> bytes:
    dims = b"".join(_blob(1, _int(1, d)) for d in shape)
    tensor_type = _int(1, _DTYPE_FLOAT) + _blob(2, dims)
    return _string(1, name) + _blob(2, _blob(1, tensor_type))


def _model(graph: bytes, opset: int = 13) -> bytes:
    return (
        _int(1, 7)
        + _string(2, "nns-trainer")
        + _string(3, "0.1.0")
        + _blob(8, _string(1, "") + _int(2, opset))
        + _blob(7, graph)
    )


def _torch_lstm_to_onnx(lstm: torch.nn.LSTM):
    """Reorder torch gate blocks (i, f, g, o) into ONNX order (i, o, f, c)."""
    h = lstm.hidden_size

    def reorder(mat):
        blocks = [mat[k * h : (k + 1) * h] for k in range(4)]  # i f g o
        return np.concatenate([blocks[0], blocks[3], blocks[1], blocks[2]])

    w = reorder(lstm.weight_ih_l0.detach().numpy())[None]
    r = reorder(lstm.weight_hh_l0.detach().numpy())[None]
    wb = reorder(lstm.bias_ih_l0.detach().numpy())
    rb = reorder(lstm.bias_hh_l0.detach().numpy())
    b = np.concatenate([wb, rb])[None]
    return w.astype(np.float32), r.astype(np.float32), b.astype(np.float32)


def export_onnx(model: WindowClassifier, frames: int, path) -> Path:
    """Serialize the classifier as an ONNX graph with input (1, T, 3, s, s)."""
    model = model.eval()
    size = model.input_size
    nodes = []
    inits = [_tensor("shape_frames", np.array([frames, 3, size, size], dtype=np.int64))]
    nodes.append(_node("Reshape", ["windows", "shape_frames"], ["stack0"]))

    value = "stack0"
    convs = [m for m in model.encoder if isinstance(m, torch.nn.Conv2d)]
    for idx, conv in enumerate(convs):
        w_name, b_name = f"conv{idx}_w", f"conv{idx}_b"
        inits.append(_tensor(w_name, conv.weight.detach().numpy().astype(np.float32)))
        inits.append(_tensor(b_name, conv.bias.detach().numpy().astype(np.float32)))
        nodes.append(
            _node(
                "Conv",
                [value, w_name, b_name],
                [f"conv{idx}_out"],
                [
                    _attr_ints("kernel_shape", [3, 3]),
                    _attr_ints("pads", [1, 1, 1, 1]),
                    _attr_ints("strides", [1, 1]),
                ],
            )
        )
        nodes.append(_node("Relu", [f"conv{idx}_out"], [f"relu{idx}_out"]))
        nodes.append(
            _node(
                "AveragePool",
                [f"relu{idx}_out"],
                [f"pool{idx}_out"],
                [_attr_ints("kernel_shape", [2, 2]), _attr_ints("strides", [2, 2])],
            )
        )
        value = f"pool{idx}_out"

    nodes.append(_node("GlobalAveragePool", [value], ["gap_out"]))
    inits.append(_tensor("shape_seq", np.array([frames, 1, CHANNELS[-1]], dtype=np.int64)))
    nodes.append(_node("Reshape", ["gap_out", "shape_seq"], ["seq"]))

    w, r, b = _torch_lstm_to_onnx(model.lstm)
    inits += [_tensor("lstm_w", w), _tensor("lstm_r", r), _tensor("lstm_b", b)]
    nodes.append(
        _node(
            "LSTM",
            ["seq", "lstm_w", "lstm_r", "lstm_b"],
            ["lstm_y", "lstm_h", "lstm_c"],
            [_attr_int("hidden_size", model.hidden)],
        )
    )
    inits.append(_tensor("shape_h", np.array([1, model.hidden], dtype=np.int64)))
    nodes.append(_node("Reshape", ["lstm_h", "shape_h"], ["h_last"]))

    inits.append(_tensor("head_w", model.head.weight.detach().numpy().astype(np.float32)))
    inits.append(_tensor("head_b", model.head.bias.detach().numpy().astype(np.float32)))
    nodes.append(_node("Gemm", ["h_last", "head_w", "head_b"], ["logit"], [_attr_int("transB", 1)]))
    nodes.append(_node("Sigmoid", ["logit"], ["probability"]))

    graph = b"".join(_blob(1, n) for n in nodes)
    graph += _string(2, "window_classifier")
    graph += b"".join(_blob(5, t) for t in inits)
    graph += _blob(11, _value_info("windows", (1, frames, 3, size, size)))
    graph += _blob(12, _value_info("probability", (1, 1)))

    path = Path(path)
    path.write_bytes(_model(graph))
    return path


def write_meta(path, input_size: int, frames: int) -> Path:
    """Sidecar read by the segmentation toolkit's ONNX backend."""
    meta_path = Path(path)
    meta_path.write_text(f"input_size={input_size}\nframes={frames}\nemits=probability\n")
    return meta_path
