"""Network graph: layer specifications, validation, and shape inference.

A network is a DAG of named layers.  Exactly two kinds carry trainable
parameters (``conv`` and ``fc``); everything else is a fixed transformation.
Activations are batched, channel-major arrays of shape (N, C, H, W); fully
connected outputs keep the layout with H = W = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

__all__ = [
    "GraphError",
    "LayerSpec",
    "NetworkGraph",
    "build_graph",
    "AFFINE_KINDS",
    "HOMOGENEOUS_KINDS",
    "KINDS",
]

# conv/fc are the parameterized (affine) layers; the rest are fixed.
AFFINE_KINDS = frozenset({"conv", "fc"})

# f(c*x) == c*f(x) for c > 0; a scale applied below one of these layers can
# be folded into the next affine layer.
HOMOGENEOUS_KINDS = frozenset({"relu", "maxpool", "avgpool", "scale", "dropout"})

KINDS = frozenset(
    {
        "input",
        "conv",
        "fc",
        "relu",
        "maxpool",
        "avgpool",
        "lrn",
        "dropout",
        "concat",
        "scale",
    }
)


class GraphError(ValueError):
    """Invalid network description (bad reference, cycle, geometry...)."""


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the network.

    Only the fields relevant to `kind` are meaningful; the rest keep their
    defaults.  `shape` is the per-sample (C, H, W) of the input layer.
    """

    name: str
    kind: str
    inputs: tuple[str, ...] = ()
    # conv
    out_channels: int = 0
    kernel: int = 0
    stride: int = 1
    pad: int = 0
    # fc
    out_units: int = 0
    # lrn (Caffe across-channel convention: 1 + (alpha/n) * windowed sum of squares)
    local_size: int = 5
    lrn_alpha: float = 1e-4
    lrn_beta: float = 0.75
    lrn_k: float = 1.0
    # dropout
    ratio: float = 0.5
    # scale
    factor: float = 1.0
    # input
    shape: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))


@dataclass
class NetworkGraph:
    """Validated DAG with cached topological order and per-layer shapes.

    `shapes` maps layer name to the per-sample output shape (C, H, W).
    """

    layers: dict[str, LayerSpec]
    input_name: str
    output_name: str
    topo_order: list[str] = field(default_factory=list)
    shapes: dict[str, tuple[int, int, int]] = field(default_factory=dict)

    def consumers(self) -> dict[str, list[str]]:
        """Map from layer name to the names that consume its output."""
        out: dict[str, list[str]] = {name: [] for name in self.layers}
        for spec in self.layers.values():
            for src in spec.inputs:
                out[src].append(spec.name)
        return out

    def affine_layers(self) -> list[str]:
        """Names of parameterized layers in topological order."""
        return [n for n in self.topo_order if self.layers[n].kind in AFFINE_KINDS]

    def fan_in(self, name: str) -> int:
        """Number of weight columns of an affine layer."""
        spec = self.layers[name]
        c, h, w = self.shapes[spec.inputs[0]]
        if spec.kind == "conv":
            return c * spec.kernel * spec.kernel
        if spec.kind == "fc":
            return c * h * w
        raise GraphError(f"layer '{name}' is not affine")

    def weight_shape(self, name: str) -> tuple[int, ...]:
        """Storage shape of an affine layer's weight tensor."""
        spec = self.layers[name]
        if spec.kind == "conv":
            c = self.shapes[spec.inputs[0]][0]
            return (spec.out_channels, c, spec.kernel, spec.kernel)
        if spec.kind == "fc":
            return (spec.out_units, self.fan_in(name))
        raise GraphError(f"layer '{name}' is not affine")

    def with_layer_inserted(self, after: str, spec: LayerSpec) -> "NetworkGraph":
        """New graph with `spec` spliced in between `after` and its consumers."""
        if spec.name in self.layers:
            raise GraphError(f"layer '{spec.name}' already exists")
        new_specs = []
        for old in self.layers.values():
            if after in old.inputs:
                new_inputs = tuple(spec.name if i == after else i for i in old.inputs)
                old = replace(old, inputs=new_inputs)
            new_specs.append(old)
        new_specs.append(replace(spec, inputs=(after,)))
        return build_graph(new_specs)

    def with_layer_replaced(self, spec: LayerSpec) -> "NetworkGraph":
        """New graph with the layer of the same name swapped for `spec`."""
        if spec.name not in self.layers:
            raise GraphError(f"layer '{spec.name}' does not exist")
        return build_graph(
            [spec if old.name == spec.name else old for old in self.layers.values()]
        )


def conv_out_dim(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1

def pool_out_dim(size: int, kernel: int, stride: int) -> int:
    # Ceil mode: the trailing window may be partial (it still starts inside
    # the input); avg pooling averages over the valid elements only.
    return int(math.ceil((size - kernel) / stride)) + 1


def _infer_shape(spec: LayerSpec, in_shapes: list[tuple[int, int, int]]) -> tuple[int, int, int]:
    name = spec.name
    if spec.kind == "input":
        if len(spec.shape) != 3 or any(s < 1 for s in spec.shape):
            raise GraphError(f"input layer '{name}' needs a positive (C, H, W) shape")
        return spec.shape  # type: ignore[return-value]

    if spec.kind == "conv":
        c, h, w = in_shapes[0]
        if spec.out_channels < 1 or spec.kernel < 1 or spec.stride < 1 or spec.pad < 0:
            raise GraphError(f"conv layer '{name}' has invalid parameters")
        oh = conv_out_dim(h, spec.kernel, spec.stride, spec.pad)
        ow = conv_out_dim(w, spec.kernel, spec.stride, spec.pad)
        if oh < 1 or ow < 1:
            raise GraphError(f"conv layer '{name}' produces empty output ({oh}x{ow})")
        return (spec.out_channels, oh, ow)

    if spec.kind == "fc":
        if spec.out_units < 1:
            raise GraphError(f"fc layer '{name}' needs a positive unit count")
        return (spec.out_units, 1, 1)

    if spec.kind in ("maxpool", "avgpool"):
        c, h, w = in_shapes[0]
        if spec.kernel < 1 or spec.stride < 1:
            raise GraphError(f"pool layer '{name}' has invalid parameters")
        oh = pool_out_dim(h, spec.kernel, spec.stride)
        ow = pool_out_dim(w, spec.kernel, spec.stride)
        if oh < 1 or ow < 1:
            raise GraphError(f"pool layer '{name}' produces empty output ({oh}x{ow})")
        return (c, oh, ow)

    if spec.kind == "lrn":
        if spec.local_size < 1 or spec.lrn_k <= 0:
            raise GraphError(f"lrn layer '{name}' needs local_size >= 1 and k > 0")
        return in_shapes[0]

    if spec.kind == "dropout":
        if not 0.0 <= spec.ratio < 1.0:
            raise GraphError(f"dropout layer '{name}' needs 0 <= ratio < 1")
        return in_shapes[0]

    if spec.kind == "scale":
        return in_shapes[0]

    if spec.kind == "relu":
        return in_shapes[0]

    if spec.kind == "concat":
        c0, h0, w0 = in_shapes[0]
        for c, h, w in in_shapes[1:]:
            if (h, w) != (h0, w0):
                raise GraphError(f"concat layer '{name}' inputs disagree on spatial size")
        return (sum(s[0] for s in in_shapes), h0, w0)

    raise GraphError(f"layer '{name}' has unknown kind '{spec.kind}'")


def build_graph(specs) -> NetworkGraph:
    """Validate layer specs and return a graph with cached topo order/shapes.

    Raises GraphError naming the offending layer on duplicate names, unknown
    kinds, dangling references, cycles, arity problems, missing or multiple
    inputs/outputs, and degenerate geometry.
    """
    specs = list(specs)
    layers: dict[str, LayerSpec] = {}
    for spec in specs:
        if spec.name in layers:
            raise GraphError(f"duplicate layer name '{spec.name}'")
        if spec.kind not in KINDS:
            raise GraphError(f"layer '{spec.name}' has unknown kind '{spec.kind}'")
        layers[spec.name] = spec

    inputs = [s.name for s in specs if s.kind == "input"]
    if len(inputs) != 1:
        raise GraphError(f"expected exactly one input layer, found {len(inputs)}")
    input_name = inputs[0]

    for spec in specs:
        if spec.kind == "input":
            if spec.inputs:
                raise GraphError(f"input layer '{spec.name}' must not have inputs")
            continue
        if spec.kind == "concat":
            if len(spec.inputs) < 2:
                raise GraphError(f"concat layer '{spec.name}' needs at least two inputs")
        elif len(spec.inputs) != 1:
            raise GraphError(f"layer '{spec.name}' needs exactly one input")
        for ref in spec.inputs:
            if ref not in layers:
                raise GraphError(f"layer '{spec.name}' references unknown layer '{ref}'")

    # Kahn's algorithm; anything left over sits on a cycle.
    pending = {s.name: len(s.inputs) for s in specs}
    consumers: dict[str, list[str]] = {s.name: [] for s in specs}
    for spec in specs:
        for ref in spec.inputs:
            consumers[ref].append(spec.name)
    ready = [s.name for s in specs if pending[s.name] == 0]
    topo: list[str] = []
    while ready:
        name = ready.pop(0)
        topo.append(name)
        for nxt in consumers[name]:
            pending[nxt] -= 1
            if pending[nxt] == 0:
                ready.append(nxt)
    if len(topo) != len(specs):
        stuck = sorted(set(layers) - set(topo))
        raise GraphError(f"cycle detected involving layer(s): {', '.join(stuck)}")

    sinks = [name for name in layers if not consumers[name]]
    if len(sinks) != 1:
        raise GraphError(f"expected exactly one output layer, found: {', '.join(sorted(sinks))}")

    shapes: dict[str, tuple[int, int, int]] = {}
    for name in topo:
        spec = layers[name]
        shapes[name] = _infer_shape(spec, [shapes[i] for i in spec.inputs])

    ordered = {name: layers[name] for name in topo}
    return NetworkGraph(
        layers=ordered,
        input_name=input_name,
        output_name=sinks[0],
        topo_order=topo,
        shapes=shapes,
    )
