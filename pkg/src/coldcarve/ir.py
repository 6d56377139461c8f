"""Two-file model description: architecture XML plus a raw float32 weight blob.

The XML dialect is a small, fixed subset of the OpenVINO IR v7 tags::

    <net name=".." version="7">
      <layers>
        <layer id=".." name=".." type="..">
          <data .../>                       (kind specific, optional)
          <input><port id="0" precision="FP32"><dim>..</dim>...</port></input>
          <output><port id="1" precision="FP32"><dim>..</dim>...</port></output>
        </layer>
      </layers>
      <edges>
        <edge from-layer=".." from-port=".." to-layer=".." to-port=".."/>
      </edges>
      <cli_parameters>...</cli_parameters>  (optional, opaque)
    </net>

The first ``<dim>`` of every port is the batch dimension and is always 1.
The weight blob holds every parameter as little-endian float32, layer by
layer in topological order; inside a layer the weights come first
(neuron-major, i.e. one output neuron or filter after another) and the
biases follow.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import BlobSizeMismatch, InvalidModel, MalformedXml, SchemaViolation

IR_VERSION = "7"
PRECISION = "FP32"

KINDS = (
    "Input",
    "Dense",
    "Conv2D",
    "MaxPool2D",
    "ReLU",
    "PReLU",
    "Dropout",
    "Flatten",
    "Softmax",
)
SHAPE_PRESERVING = frozenset({"ReLU", "PReLU", "Dropout", "Softmax"})
PARAMETERIZED = frozenset({"Dense", "Conv2D", "PReLU"})

# port ids are fixed by the dialect
INPUT_PORT = 0
OUTPUT_PORT = 1
SOURCE_OUTPUT_PORT = 0  # the Input layer has a single port, numbered 0

_KNOWN_TAGS = frozenset(
    {"net", "layers", "layer", "input", "output", "port", "dim", "edges", "edge", "data"}
)
_OPAQUE_TAGS = frozenset({"cli_parameters"})

Shape = tuple[int, ...]


@dataclass(frozen=True)
class Edge:
    from_layer: int
    from_port: int
    to_layer: int
    to_port: int


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the network description.

    ``in_shape``/``out_shape`` exclude the batch dimension.  Kind-specific
    parameters: ``kernel``/``stride`` for Conv2D and MaxPool2D, ``pad`` for
    Conv2D (symmetric), ``rate`` for Dropout.  Dense and Conv2D take their
    output width from ``out_shape[0]``.
    """

    id: int
    name: str
    kind: str
    in_shape: Shape
    out_shape: Shape
    kernel: tuple[int, int] | None = None
    stride: tuple[int, int] | None = None
    pad: tuple[int, int] = (0, 0)
    rate: float = 0.0
    precision: str = PRECISION

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise InvalidModel(f"unknown layer kind {self.kind!r}")
        if self.precision != PRECISION:
            raise InvalidModel(f"layer {self.id}: only FP32 is supported, got {self.precision}")
        if not self.name:
            raise InvalidModel(f"layer {self.id} has an empty name")
        expected = infer_out_shape(self.kind, self.in_shape, self.kernel, self.stride, self.pad,
                                   self.out_shape)
        if tuple(self.out_shape) != expected:
            raise InvalidModel(
                f"layer {self.id} ({self.kind}): output shape {self.out_shape} "
                f"inconsistent with input {self.in_shape}, expected {expected}"
            )
        if self.kind == "Dropout" and not 0.0 <= self.rate < 1.0:
            raise InvalidModel(f"dropout rate must lie in [0, 1), got {self.rate}")

    @property
    def param_shapes(self) -> list[Shape]:
        """Shapes of the stored parameter arrays, in blob order."""
        if self.kind == "Dense":
            return [(self.out_shape[0], self.in_shape[0]), (self.out_shape[0],)]
        if self.kind == "Conv2D":
            kh, kw = self.kernel
            return [(self.out_shape[0], self.in_shape[0], kh, kw), (self.out_shape[0],)]
        if self.kind == "PReLU":
            return [(self.in_shape[0],)]
        return []

    @property
    def param_count(self) -> int:
        return sum(math.prod(s) for s in self.param_shapes)


def infer_out_shape(kind, in_shape, kernel=None, stride=None, pad=(0, 0), out_shape=None) -> Shape:
    """Output shape implied by ``kind`` and its attributes.

    Dense and Conv2D need ``out_shape`` for their width; it is only checked
    for rank there.
    """
    in_shape = tuple(int(d) for d in in_shape)
    if not in_shape or any(d <= 0 for d in in_shape):
        raise InvalidModel(f"{kind}: input shape must be non-empty and positive, got {in_shape}")
    if kind in ("Input", "ReLU", "PReLU", "Dropout"):
        return in_shape
    if kind == "Softmax":
        if len(in_shape) != 1:
            raise InvalidModel(f"Softmax expects a 1-D input, got {in_shape}")
        return in_shape
    if kind == "Flatten":
        return (math.prod(in_shape),)
    if kind == "Dense":
        if len(in_shape) != 1:
            raise InvalidModel(f"Dense expects a 1-D input, got {in_shape}")
        if out_shape is None or len(out_shape) != 1 or out_shape[0] <= 0:
            raise InvalidModel(f"Dense needs a positive 1-D output shape, got {out_shape}")
        return (int(out_shape[0]),)
    if kind in ("Conv2D", "MaxPool2D"):
        if len(in_shape) != 3:
            raise InvalidModel(f"{kind} expects a (C, H, W) input, got {in_shape}")
        if kernel is None or stride is None:
            raise InvalidModel(f"{kind} needs kernel and stride")
        if min(kernel) <= 0 or min(stride) <= 0 or min(pad) < 0:
            raise InvalidModel(f"{kind}: bad kernel/stride/pad {kernel}/{stride}/{pad}")
        c, h, w = in_shape
        ph, pw = pad if kind == "Conv2D" else (0, 0)
        ho = (h + 2 * ph - kernel[0]) // stride[0] + 1
        wo = (w + 2 * pw - kernel[1]) // stride[1] + 1
        if ho <= 0 or wo <= 0:
            raise InvalidModel(f"{kind}: kernel {kernel} larger than padded input {in_shape}")
        if kind == "MaxPool2D":
            return (c, ho, wo)
        if out_shape is None or len(out_shape) != 3 or out_shape[0] <= 0:
            raise InvalidModel(f"Conv2D needs a positive (C, H, W) output shape, got {out_shape}")
        return (int(out_shape[0]), ho, wo)
    raise InvalidModel(f"unknown layer kind {kind!r}")


@dataclass(frozen=True)
class IRModel:
    """Layered network description mirroring the architecture file."""

    name: str
    layers: tuple[LayerSpec, ...]
    edges: tuple[Edge, ...] = ()
    _order: tuple[int, ...] = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "edges", tuple(self.edges))
        if not self.name:
            raise InvalidModel("model name must be non-empty")
        if not self.layers:
            raise InvalidModel("model has no layers")
        by_id = {}
        for layer in self.layers:
            if layer.id in by_id:
                raise InvalidModel(f"duplicate layer id {layer.id}")
            by_id[layer.id] = layer
        inputs = [l for l in self.layers if l.kind == "Input"]
        if len(inputs) != 1:
            raise InvalidModel(f"expected exactly one Input layer, found {len(inputs)}")

        incoming: dict[int, Edge] = {}
        outgoing: dict[int, list[Edge]] = {lid: [] for lid in by_id}
        for e in self.edges:
            if e.from_layer not in by_id or e.to_layer not in by_id:
                raise InvalidModel(f"edge {e} references an unknown layer")
            src, dst = by_id[e.from_layer], by_id[e.to_layer]
            if e.from_port != output_port(src):
                raise InvalidModel(f"edge {e}: layer {src.id} has no output port {e.from_port}")
            if dst.kind == "Input" or e.to_port != INPUT_PORT:
                raise InvalidModel(f"edge {e}: layer {dst.id} has no input port {e.to_port}")
            if e.to_layer in incoming:
                raise InvalidModel(f"layer {e.to_layer} has more than one incoming edge")
            if src.out_shape != dst.in_shape:
                raise InvalidModel(
                    f"edge {e}: shape {src.out_shape} does not match input {dst.in_shape}"
                )
            incoming[e.to_layer] = e
            outgoing[e.from_layer].append(e)
        for layer in self.layers:
            if layer.kind != "Input" and layer.id not in incoming:
                raise InvalidModel(f"layer {layer.id} is not connected to the graph")
        sinks = [lid for lid, outs in outgoing.items() if not outs]
        if len(sinks) != 1:
            raise InvalidModel(f"expected exactly one output layer, found {len(sinks)}")

        # with one incoming edge per layer and a single sink the graph is a chain
        order = [inputs[0].id]
        seen = {order[0]}
        while outgoing[order[-1]]:
            (nxt,) = outgoing[order[-1]]
            if nxt.to_layer in seen:
                raise InvalidModel("graph contains a cycle")
            order.append(nxt.to_layer)
            seen.add(nxt.to_layer)
        if len(order) != len(self.layers):
            raise InvalidModel("graph is not a single connected chain")
        # canonical form: layers and edges in topological order
        rank = {lid: i for i, lid in enumerate(order)}
        object.__setattr__(self, "layers", tuple(by_id[i] for i in order))
        object.__setattr__(self, "edges", tuple(sorted(self.edges, key=lambda e: rank[e.to_layer])))
        object.__setattr__(self, "_order", tuple(order))

    @property
    def ordered_layers(self) -> list[LayerSpec]:
        """Layers from input to output (the stored order is already canonical)."""
        return list(self.layers)

    @property
    def input_shape(self) -> Shape:
        return self.ordered_layers[0].out_shape

    @property
    def output_shape(self) -> Shape:
        return self.ordered_layers[-1].out_shape

    def layer(self, layer_id: int) -> LayerSpec:
        for l in self.layers:
            if l.id == layer_id:
                return l
        raise KeyError(layer_id)

    def same_architecture(self, other: "IRModel") -> bool:
        """Structural equality ignoring the free-text model and layer names."""
        strip = lambda m: (  # noqa: E731
            tuple(replace(l, name="_") for l in m.layers),
            m.edges,
        )
        return strip(self) == strip(other)


def output_port(layer: LayerSpec) -> int:
    return SOURCE_OUTPUT_PORT if layer.kind == "Input" else OUTPUT_PORT


def total_params(model: IRModel) -> int:
    """Number of float32 values in the model's weight blob."""
    return sum(l.param_count for l in model.layers)


# --------------------------------------------------------------------------
# sequential builder


@dataclass(frozen=True)
class _Block:
    kind: str
    width: int | None = None
    kernel: tuple[int, int] | None = None
    stride: tuple[int, int] | None = None
    pad: tuple[int, int] = (0, 0)
    rate: float = 0.0


def _pair(v) -> tuple[int, int]:
    return (int(v), int(v)) if np.isscalar(v) else (int(v[0]), int(v[1]))


def dense(units: int) -> _Block:
    return _Block("Dense", width=units)


def conv2d(filters: int, kernel, stride=1, pad=0) -> _Block:
    return _Block("Conv2D", width=filters, kernel=_pair(kernel), stride=_pair(stride), pad=_pair(pad))


def maxpool2d(kernel, stride=None) -> _Block:
    return _Block("MaxPool2D", kernel=_pair(kernel), stride=_pair(kernel if stride is None else stride))


def relu() -> _Block:
    return _Block("ReLU")


def prelu() -> _Block:
    return _Block("PReLU")


def dropout(rate: float) -> _Block:
    return _Block("Dropout", rate=float(rate))


def flatten() -> _Block:
    return _Block("Flatten")


def softmax() -> _Block:
    return _Block("Softmax")


def default_layer_name(kind: str, layer_id: int) -> str:
    return f"{kind.lower()}_{layer_id}"


def sequential(name: str, input_shape: Sequence[int], blocks: Iterable[_Block]) -> IRModel:
    """Build a chain model, inferring every intermediate shape.

    >>> m = sequential("tiny", (3,), [dense(4), softmax()])
    >>> total_params(m)
    16
    """
    shape = tuple(int(d) for d in input_shape)
    layers = [LayerSpec(0, default_layer_name("Input", 0), "Input", shape, shape)]
    edges = []
    for i, b in enumerate(blocks, start=1):
        if b.kind == "Dense":
            out = (b.width,)
        elif b.kind == "Conv2D":
            out = infer_out_shape("Conv2D", shape, b.kernel, b.stride, b.pad, (b.width, 1, 1))
        else:
            out = infer_out_shape(b.kind, shape, b.kernel, b.stride, b.pad)
        layers.append(
            LayerSpec(i, default_layer_name(b.kind, i), b.kind, shape, out,
                      kernel=b.kernel, stride=b.stride, pad=b.pad, rate=b.rate)
        )
        prev = layers[-2]
        edges.append(Edge(prev.id, output_port(prev), i, INPUT_PORT))
        shape = out
    return IRModel(name, tuple(layers), tuple(edges))


# --------------------------------------------------------------------------
# XML


def _data_attrs(layer: LayerSpec) -> list[tuple[str, str]]:
    if layer.kind == "Dense":
        return [("out-size", str(layer.out_shape[0]))]
    if layer.kind == "Conv2D":
        return [
            ("kernel", "%d,%d" % layer.kernel),
            ("strides", "%d,%d" % layer.stride),
            ("pads", "%d,%d" % layer.pad),
            ("output", str(layer.out_shape[0])),
        ]
    if layer.kind == "MaxPool2D":
        return [("kernel", "%d,%d" % layer.kernel), ("strides", "%d,%d" % layer.stride)]
    if layer.kind == "Dropout":
        return [("rate", repr(float(layer.rate)))]
    if layer.kind == "Softmax":
        return [("axis", "1")]
    return []


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")
    )


def _port_lines(port_id: int, shape: Shape, indent: str) -> list[str]:
    lines = [f'{indent}<port id="{port_id}" precision="{PRECISION}">']
    lines += [f"{indent}  <dim>{d}</dim>" for d in (1, *shape)]
    lines.append(f"{indent}</port>")
    return lines


def serialize_xml(model: IRModel, cli_parameters: Mapping[str, str] | None = None) -> str:
    """Render ``model`` in the IR dialect; byte-for-byte deterministic."""
    out = [f'<net name="{_escape(model.name)}" version="{IR_VERSION}">', "  <layers>"]
    for layer in model.ordered_layers:
        out.append(
            f'    <layer id="{layer.id}" name="{_escape(layer.name)}" type="{layer.kind}">'
        )
        attrs = _data_attrs(layer)
        if attrs:
            out.append("      <data " + " ".join(f'{k}="{v}"' for k, v in attrs) + "/>")
        if layer.kind != "Input":
            out.append("      <input>")
            out += _port_lines(INPUT_PORT, layer.in_shape, "        ")
            out.append("      </input>")
        out.append("      <output>")
        out += _port_lines(output_port(layer), layer.out_shape, "        ")
        out.append("      </output>")
        out.append("    </layer>")
    out.append("  </layers>")
    out.append("  <edges>")
    for e in model.edges:
        out.append(
            f'    <edge from-layer="{e.from_layer}" from-port="{e.from_port}" '
            f'to-layer="{e.to_layer}" to-port="{e.to_port}"/>'
        )
    out.append("  </edges>")
    if cli_parameters:
        out.append("  <cli_parameters>")
        for k in sorted(cli_parameters):
            out.append(f'    <{k} value="{_escape(str(cli_parameters[k]))}"/>')
        out.append("  </cli_parameters>")
    out.append("</net>")
    return "\n".join(out) + "\n"


def _require(elem: ET.Element, attr: str) -> str:
    value = elem.get(attr)
    if value is None:
        raise SchemaViolation(f"<{elem.tag}> is missing required attribute {attr!r}")
    return value


def _int(text: str | None, what: str) -> int:
    try:
        return int(text)
    except (TypeError, ValueError):
        raise SchemaViolation(f"{what}: expected an integer, got {text!r}") from None


def _pair_attr(elem: ET.Element, attr: str) -> tuple[int, int]:
    parts = _require(elem, attr).split(",")
    if len(parts) != 2:
        raise SchemaViolation(f"{attr}: expected two comma-separated integers")
    return (_int(parts[0], attr), _int(parts[1], attr))


def _check_tags(elem: ET.Element) -> None:
    if elem.tag in _OPAQUE_TAGS:
        return
    if elem.tag not in _KNOWN_TAGS:
        raise MalformedXml(f"unknown tag <{elem.tag}>")
    for child in elem:
        _check_tags(child)


def _read_port(parent: ET.Element | None, where: str) -> tuple[int, Shape]:
    if parent is None:
        raise SchemaViolation(f"{where}: missing port block")
    ports = parent.findall("port")
    if len(ports) != 1:
        raise SchemaViolation(f"{where}: expected exactly one <port>, found {len(ports)}")
    port = ports[0]
    pid = _int(_require(port, "id"), f"{where} port id")
    precision = _require(port, "precision")
    if precision != PRECISION:
        raise SchemaViolation(f"{where}: unsupported precision {precision!r}")
    dims = tuple(_int((d.text or "").strip(), f"{where} dim") for d in port.findall("dim"))
    if len(dims) < 2 or dims[0] != 1:
        raise SchemaViolation(f"{where}: expected a batch dim of 1 followed by the shape, got {dims}")
    return pid, dims[1:]


def parse_xml(text: str) -> IRModel:
    """Inverse of :func:`serialize_xml`."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from None
    if root.tag != "net":
        raise MalformedXml(f"root element must be <net>, got <{root.tag}>")
    _check_tags(root)
    name = _require(root, "name")
    _require(root, "version")
    layers_elem = root.find("layers")
    if layers_elem is None:
        raise SchemaViolation("missing <layers>")

    layers = []
    for el in layers_elem.findall("layer"):
        lid = _int(_require(el, "id"), "layer id")
        where = f"layer {lid}"
        kind = _require(el, "type")
        if kind not in KINDS:
            raise SchemaViolation(f"{where}: unknown layer type {kind!r}")
        out_pid, out_shape = _read_port(el.find("output"), f"{where} output")
        if kind == "Input":
            in_shape = out_shape
            if el.find("input") is not None:
                raise SchemaViolation(f"{where}: Input layer cannot have an input port")
        else:
            in_pid, in_shape = _read_port(el.find("input"), f"{where} input")
            if in_pid != INPUT_PORT:
                raise SchemaViolation(f"{where}: input port must be {INPUT_PORT}")
        expected_out = SOURCE_OUTPUT_PORT if kind == "Input" else OUTPUT_PORT
        if out_pid != expected_out:
            raise SchemaViolation(f"{where}: output port must be {expected_out}")
        data = el.find("data")
        kw: dict = {}
        if kind in ("Conv2D", "MaxPool2D", "Dense", "Dropout"):
            if data is None:
                raise SchemaViolation(f"{where}: {kind} requires a <data> element")
        if kind == "Dense":
            if _int(_require(data, "out-size"), "out-size") != out_shape[0]:
                raise SchemaViolation(f"{where}: out-size disagrees with the output port")
        elif kind == "Conv2D":
            kw = dict(kernel=_pair_attr(data, "kernel"), stride=_pair_attr(data, "strides"),
                      pad=_pair_attr(data, "pads"))
            if _int(_require(data, "output"), "output") != out_shape[0]:
                raise SchemaViolation(f"{where}: output disagrees with the output port")
        elif kind == "MaxPool2D":
            kw = dict(kernel=_pair_attr(data, "kernel"), stride=_pair_attr(data, "strides"))
        elif kind == "Dropout":
            try:
                kw = dict(rate=float(_require(data, "rate")))
            except ValueError:
                raise SchemaViolation(f"{where}: bad dropout rate") from None
        try:
            layers.append(LayerSpec(lid, _require(el, "name"), kind, in_shape, out_shape, **kw))
        except InvalidModel as exc:
            raise SchemaViolation(str(exc)) from None

    edges = []
    edges_elem = root.find("edges")
    if edges_elem is not None:
        for e in edges_elem.findall("edge"):
            edges.append(Edge(*(_int(_require(e, a), a) for a in
                                ("from-layer", "from-port", "to-layer", "to-port"))))
    try:
        return IRModel(name, tuple(layers), tuple(edges))
    except InvalidModel as exc:
        raise SchemaViolation(str(exc)) from None


# --------------------------------------------------------------------------
# weight blob


def pack_weights(model: IRModel, params: Mapping[int, Sequence[np.ndarray]]) -> bytes:
    """Concatenate per-layer parameter arrays into the blob layout."""
    chunks = []
    for layer in model.ordered_layers:
        arrays = params.get(layer.id, [])
        shapes = layer.param_shapes
        if len(arrays) != len(shapes):
            raise BlobSizeMismatch(f"layer {layer.id}: expected {len(shapes)} arrays, got {len(arrays)}")
        for a, s in zip(arrays, shapes):
            a = np.asarray(a)
            if a.shape != s:
                raise BlobSizeMismatch(f"layer {layer.id}: array shape {a.shape} != {s}")
            chunks.append(np.ascontiguousarray(a, dtype="<f4").tobytes())
    return b"".join(chunks)


def unpack_weights(model: IRModel, blob: bytes | np.ndarray) -> dict[int, list[np.ndarray]]:
    """Split a blob (raw bytes or float32 values) back into per-layer arrays."""
    if isinstance(blob, np.ndarray):
        values = np.asarray(blob, dtype=np.float32)
    else:
        if len(blob) % 4:
            raise BlobSizeMismatch(f"blob length {len(blob)} is not a multiple of 4")
        values = np.frombuffer(bytes(blob), dtype="<f4").astype(np.float32)
    if values.size != total_params(model):
        raise BlobSizeMismatch(f"blob holds {values.size} values, model needs {total_params(model)}")
    out: dict[int, list[np.ndarray]] = {}
    pos = 0
    for layer in model.ordered_layers:
        arrays = []
        for s in layer.param_shapes:
            n = math.prod(s)
            arrays.append(values[pos:pos + n].reshape(s).copy())
            pos += n
        out[layer.id] = arrays
    return out


def serialize_weights(network) -> bytes:
    """Blob for a network exposing ``spec`` and ``params`` (layer id -> arrays)."""
    return pack_weights(network.spec, network.params)


def blob_values(blob: bytes) -> np.ndarray:
    return np.frombuffer(bytes(blob), dtype="<f4").astype(np.float32)


def write_ir(model: IRModel, blob: bytes, stem, cli_parameters=None) -> tuple[str, str]:
    """Write ``<stem>.xml`` and ``<stem>.bin``; returns both paths."""
    stem = str(stem)
    xml_path, bin_path = stem + ".xml", stem + ".bin"
    with open(xml_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(serialize_xml(model, cli_parameters))
    with open(bin_path, "wb") as f:
        f.write(blob)
    return xml_path, bin_path


def read_ir(stem) -> tuple[IRModel, bytes]:
    stem = str(stem)
    with open(stem + ".xml", encoding="utf-8") as f:
        model = parse_xml(f.read())
    with open(stem + ".bin", "rb") as f:
        blob = f.read()
    if len(blob) != 4 * total_params(model):
        raise BlobSizeMismatch(f"{stem}.bin has {len(blob)} bytes, expected {4 * total_params(model)}")
    return model, blob
