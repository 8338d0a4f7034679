"""Self-contained ONNX model loading and numpy inference.

The package mirror ships neither onnx nor onnxruntime, so this module parses
the ONNX protobuf wire format directly and evaluates the graph with numpy.
It covers the operator subset produced by the companion trainer (small
convolutional encoders with an LSTM head): Conv, Relu, Sigmoid, Tanh,
AveragePool, MaxPool, GlobalAveragePool, LSTM (forward), Gemm, MatMul, Add,
Mul, Concat, Reshape, Transpose, Flatten, Squeeze, Unsqueeze, Identity,
Constant.  Anything else raises NotImplementedError.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# TensorProto.DataType values we understand.
_DT_FLOAT = 1
_DT_INT32 = 6
_DT_INT64 = 7

_NP_DTYPES = {_DT_FLOAT: np.float32, _DT_INT32: np.int32, _DT_INT64: np.int64}


# ---------------------------------------------------------------------------
# protobuf wire-format primitives


def _read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        b = buf[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            return result, pos
        shift += 7
        if shift > 70:
            raise ValueError("varint too long (corrupt protobuf)")


def _signed(value: int) -> int:
    return value - (1 << 64) if value >= (1 << 63) else value


def _iter_fields(buf: bytes):
    """Yield (field_number, wire_type, payload) triples from a message."""
    pos = 0
    end = len(buf)
    while pos < end:
        key, pos = _read_varint(buf, pos)
        fno, wtype = key >> 3, key & 0x7
        if wtype == 0:
            val, pos = _read_varint(buf, pos)
            yield fno, wtype, val
        elif wtype == 1:
            yield fno, wtype, buf[pos : pos + 8]
            pos += 8
        elif wtype == 2:
            ln, pos = _read_varint(buf, pos)
            yield fno, wtype, buf[pos : pos + ln]
            pos += ln
        elif wtype == 5:
            yield fno, wtype, buf[pos : pos + 4]
            pos += 4
        else:
            raise ValueError(f"unsupported protobuf wire type {wtype}")


def _varints(payload, wtype) -> list[int]:
    # Packed (length-delimited) or single varint field.
    if wtype == 0:
        return [_signed(payload)]
    out = []
    pos = 0
    while pos < len(payload):
        v, pos = _read_varint(payload, pos)
        out.append(_signed(v))
    return out


# ---------------------------------------------------------------------------
# ONNX message decoding (field numbers per onnx.proto)


@dataclass
class OnnxNode:
    op_type: str
    inputs: list[str]
    outputs: list[str]
    name: str = ""
    attrs: dict = field(default_factory=dict)


@dataclass
class OnnxGraph:
    nodes: list[OnnxNode]
    initializers: dict[str, np.ndarray]
    inputs: list[tuple[str, tuple]]
    outputs: list[str]
    name: str = ""


def _decode_tensor(buf: bytes) -> tuple[str, np.ndarray]:
    dims: list[int] = []
    dtype = _DT_FLOAT
    name = ""
    raw = None
    float_data: list[float] = []
    int_data: list[int] = []
    for fno, wtype, val in _iter_fields(buf):
        if fno == 1:
            dims.extend(_varints(val, wtype))
        elif fno == 2:
            dtype = val
        elif fno == 4:
            float_data.extend(np.frombuffer(val, dtype="<f4").tolist() if wtype == 2 else [])
        elif fno == 7 or fno == 5:
            int_data.extend(_varints(val, wtype))
        elif fno == 8:
            name = val.decode("utf-8")
        elif fno == 9:
            raw = val
    np_dtype = _NP_DTYPES.get(dtype)
    if np_dtype is None:
        raise ValueError(f"unsupported tensor data type {dtype} in initializer {name!r}")
    if raw is not None:
        arr = np.frombuffer(raw, dtype=np.dtype(np_dtype).newbyteorder("<")).astype(np_dtype)
    elif float_data:
        arr = np.asarray(float_data, dtype=np_dtype)
    elif int_data:
        arr = np.asarray(int_data, dtype=np_dtype)
    else:
        arr = np.zeros(0, dtype=np_dtype)
    return name, arr.reshape(dims) if dims else arr


def _decode_attr(buf: bytes):
    name = ""
    value = None
    ints: list[int] = []
    floats: list[float] = []
    for fno, wtype, val in _iter_fields(buf):
        if fno == 1:
            name = val.decode("utf-8")
        elif fno == 2:
            value = np.frombuffer(val, dtype="<f4")[0].item()
        elif fno == 3:
            value = _signed(val)
        elif fno == 4:
            value = val
        elif fno == 5:
            value = _decode_tensor(val)[1]
        elif fno == 7:
            floats.extend(
                np.frombuffer(val, dtype="<f4").tolist() if wtype == 2 else [np.frombuffer(val, dtype="<f4")[0].item()]
            )
        elif fno == 8:
            ints.extend(_varints(val, wtype))
    if ints:
        value = ints
    elif floats:
        value = floats
    return name, value


def _decode_node(buf: bytes) -> OnnxNode:
    node = OnnxNode(op_type="", inputs=[], outputs=[])
    for fno, wtype, val in _iter_fields(buf):
        if fno == 1:
            node.inputs.append(val.decode("utf-8"))
        elif fno == 2:
            node.outputs.append(val.decode("utf-8"))
        elif fno == 3:
            node.name = val.decode("utf-8")
        elif fno == 4:
            node.op_type = val.decode("utf-8")
        elif fno == 5:
            k, v = _decode_attr(val)
            node.attrs[k] = v
    return node


def _decode_value_info(buf: bytes) -> tuple[str, tuple]:
    name = ""
    shape: list[int | None] = []
    for fno, wtype, val in _iter_fields(buf):
        if fno == 1:
            name = val.decode("utf-8")
        elif fno == 2:  # TypeProto
            for f2, w2, v2 in _iter_fields(val):
                if f2 == 1:  # tensor_type
                    for f3, w3, v3 in _iter_fields(v2):
                        if f3 == 2:  # shape
                            for f4, w4, v4 in _iter_fields(v3):
                                if f4 == 1:  # dim
                                    dim_val = None
                                    for f5, w5, v5 in _iter_fields(v4):
                                        if f5 == 1:
                                            dim_val = _signed(v5)
                                    shape.append(dim_val)
    return name, tuple(shape)


def _decode_graph(buf: bytes) -> OnnxGraph:
    graph = OnnxGraph(nodes=[], initializers={}, inputs=[], outputs=[])
    for fno, wtype, val in _iter_fields(buf):
        if fno == 1:
            graph.nodes.append(_decode_node(val))
        elif fno == 2:
            graph.name = val.decode("utf-8")
        elif fno == 5:
            name, arr = _decode_tensor(val)
            graph.initializers[name] = arr
        elif fno == 11:
            graph.inputs.append(_decode_value_info(val))
        elif fno == 12:
            graph.outputs.append(_decode_value_info(val)[0])
    return graph


def parse_model(data: bytes) -> OnnxGraph:
    """Decode a serialized ONNX ModelProto into its graph."""
    graph = None
    for fno, wtype, val in _iter_fields(data):
        if fno == 7:
            graph = _decode_graph(val)
    if graph is None:
        raise ValueError("no graph found; not an ONNX model file?")
    return graph


# ---------------------------------------------------------------------------
# numpy evaluation


def _conv(x, w, b, attrs):
    strides = attrs.get("strides", [1, 1])
    pads = attrs.get("pads", [0, 0, 0, 0])
    dil = attrs.get("dilations", [1, 1])
    if attrs.get("group", 1) != 1 or dil != [1, 1]:
        raise NotImplementedError("Conv with groups/dilations is not supported")
    n, c, h, wd = x.shape
    m, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pads[0], pads[2]), (pads[1], pads[3])))
    sh, sw = strides
    ho = (xp.shape[2] - kh) // sh + 1
    wo = (xp.shape[3] - kw) // sw + 1
    out = np.zeros((n, m, ho, wo), dtype=np.float32)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i : i + ho * sh : sh, j : j + wo * sw : sw]
            out += np.einsum("nchw,mc->nmhw", patch, w[:, :, i, j], optimize=True)
    if b is not None:
        out += b.reshape(1, m, 1, 1)
    return out.astype(np.float32)


def _pool(x, attrs, reduce_fn):
    kh, kw = attrs["kernel_shape"]
    sh, sw = attrs.get("strides", [kh, kw])
    pads = attrs.get("pads", [0, 0, 0, 0])
    if any(pads):
        raise NotImplementedError("pooling with padding is not supported")
    n, c, h, w = x.shape
    ho = (h - kh) // sh + 1
    wo = (w - kw) // sw + 1
    stacked = np.stack(
        [
            x[:, :, i : i + ho * sh : sh, j : j + wo * sw : sw]
            for i in range(kh)
            for j in range(kw)
        ]
    )
    return reduce_fn(stacked, axis=0).astype(np.float32)


def _sigmoid(x):
    out = np.empty_like(x, dtype=np.float32)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _lstm(x, w, r, b, hidden_size):
    """Forward ONNX LSTM (gate order i, o, f, c); returns (Y, Y_h, Y_c)."""
    seq, batch, _ = x.shape
    H = hidden_size
    wi, wo, wf, wc = (w[0, k * H : (k + 1) * H] for k in range(4))
    ri, ro, rf, rc = (r[0, k * H : (k + 1) * H] for k in range(4))
    if b is not None:
        wb = b[0, : 4 * H]
        rb = b[0, 4 * H :]
        bi, bo, bf, bc = (wb[k * H : (k + 1) * H] + rb[k * H : (k + 1) * H] for k in range(4))
    else:
        bi = bo = bf = bc = np.zeros(H, dtype=np.float32)
    h = np.zeros((batch, H), dtype=np.float32)
    c = np.zeros((batch, H), dtype=np.float32)
    ys = np.empty((seq, 1, batch, H), dtype=np.float32)
    for t in range(seq):
        xt = x[t]
        i = _sigmoid(xt @ wi.T + h @ ri.T + bi)
        o = _sigmoid(xt @ wo.T + h @ ro.T + bo)
        f = _sigmoid(xt @ wf.T + h @ rf.T + bf)
        g = np.tanh(xt @ wc.T + h @ rc.T + bc)
        c = f * c + i * g
        h = o * np.tanh(c)
        ys[t, 0] = h
    return ys, h[None, :, :], c[None, :, :]


class OnnxModel:
    """A parsed ONNX graph plus a straight-line numpy evaluator."""

    def __init__(self, graph: OnnxGraph):
        self.graph = graph

    @classmethod
    def load(cls, path) -> "OnnxModel":
        with open(path, "rb") as f:
            return cls(parse_model(f.read()))

    @property
    def input_info(self) -> list[tuple[str, tuple]]:
        init = self.graph.initializers
        return [(n, s) for n, s in self.graph.inputs if n not in init]

    def run(self, feeds: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        values: dict[str, np.ndarray] = dict(self.graph.initializers)
        values.update({k: np.asarray(v) for k, v in feeds.items()})
        for node in self.graph.nodes:
            self._eval_node(node, values)
        missing = [o for o in self.graph.outputs if o not in values]
        if missing:
            raise ValueError(f"graph produced no value for outputs {missing}")
        return {o: values[o] for o in self.graph.outputs}

    def _eval_node(self, node: OnnxNode, values: dict):
        def arg(i):
            if i >= len(node.inputs) or node.inputs[i] == "":
                return None
            return values[node.inputs[i]]

        op = node.op_type
        a = node.attrs
        if op == "Conv":
            out = _conv(arg(0), arg(1), arg(2), a)
        elif op == "Relu":
            out = np.maximum(arg(0), 0)
        elif op == "Sigmoid":
            out = _sigmoid(arg(0))
        elif op == "Tanh":
            out = np.tanh(arg(0)).astype(np.float32)
        elif op == "AveragePool":
            out = _pool(arg(0), a, np.mean)
        elif op == "MaxPool":
            out = _pool(arg(0), a, np.max)
        elif op == "GlobalAveragePool":
            out = arg(0).mean(axis=(2, 3), keepdims=True).astype(np.float32)
        elif op == "LSTM":
            y, yh, yc = _lstm(arg(0), arg(1), arg(2), arg(3), a["hidden_size"])
            for name, val in zip(node.outputs, (y, yh, yc)):
                if name:
                    values[name] = val
            return
        elif op == "Gemm":
            x, w = arg(0), arg(1)
            if a.get("transA", 0):
                x = x.T
            if a.get("transB", 0):
                w = w.T
            out = a.get("alpha", 1.0) * (x @ w)
            if arg(2) is not None:
                out = out + a.get("beta", 1.0) * arg(2)
            out = out.astype(np.float32)
        elif op == "MatMul":
            out = (arg(0) @ arg(1)).astype(np.float32)
        elif op == "Add":
            out = arg(0) + arg(1)
        elif op == "Mul":
            out = arg(0) * arg(1)
        elif op == "Concat":
            out = np.concatenate([values[i] for i in node.inputs], axis=a["axis"])
        elif op == "Reshape":
            shape = [int(s) for s in arg(1)]
            data = arg(0)
            shape = [data.shape[i] if s == 0 else s for i, s in enumerate(shape)]
            out = data.reshape(shape)
        elif op == "Transpose":
            out = np.transpose(arg(0), a.get("perm"))
        elif op == "Flatten":
            ax = a.get("axis", 1)
            data = arg(0)
            out = data.reshape(int(np.prod(data.shape[:ax])) if ax else 1, -1)
        elif op == "Squeeze":
            axes = a.get("axes") or ([int(v) for v in arg(1)] if arg(1) is not None else None)
            out = np.squeeze(arg(0), axis=tuple(axes) if axes else None)
        elif op == "Unsqueeze":
            axes = a.get("axes") or [int(v) for v in arg(1)]
            out = arg(0)
            for ax in sorted(axes):
                out = np.expand_dims(out, ax)
        elif op == "Identity":
            out = arg(0)
        elif op == "Constant":
            out = a["value"]
        else:
            raise NotImplementedError(f"ONNX op {op!r} is not supported by this evaluator")
        values[node.outputs[0]] = out
