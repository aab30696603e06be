"""Whole-network forward and backward passes over a layer DAG.

Weights are stored in 32-bit floats; both passes can compute in 64-bit
(pass dtype=np.float64) for strict numeric checks.  Given the same graph,
weights, batch, and seed, both passes are bit-deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as L
from .graph import AFFINE_KINDS, NetworkGraph
from .seeding import substream

__all__ = [
    "AffineParams",
    "WeightStore",
    "ActivationCache",
    "EngineError",
    "forward",
    "backward",
    "draw_random_loss",
    "clone_weights",
    "alloc_weights",
]

STORAGE_DTYPE = np.float32


class EngineError(ValueError):
    """Shape mismatch, missing weights, or stale cache."""


@dataclass
class AffineParams:
    """Weight/bias pair of one affine layer.

    weight: (out_channels, in_channels, k, k) for conv, (out_units, fan_in)
    for fc; bias: (rows,).  The same container is reused for gradients.
    """

    weight: np.ndarray
    bias: np.ndarray

    def as_matrix(self) -> np.ndarray:
        """Weight viewed as (rows, fan_in)."""
        return self.weight.reshape(self.weight.shape[0], -1)


WeightStore = dict[str, AffineParams]


def alloc_weights(graph: NetworkGraph, fill: float = 0.0) -> WeightStore:
    """A weight store of the right shapes, constant-filled."""
    store: WeightStore = {}
    for name in graph.affine_layers():
        w_shape = graph.weight_shape(name)
        store[name] = AffineParams(
            weight=np.full(w_shape, fill, dtype=STORAGE_DTYPE),
            bias=np.zeros(w_shape[0], dtype=STORAGE_DTYPE),
        )
    return store


def clone_weights(weights: WeightStore) -> WeightStore:
    return {
        name: AffineParams(p.weight.copy(), p.bias.copy()) for name, p in weights.items()
    }


@dataclass
class ActivationCache:
    """Per-layer outputs of one forward pass plus backward's y_k gradients.

    `grads` maps layer name to the loss gradient at that layer's output and
    is populated by backward().  `aux` holds layer-private state (pool
    argmax, LRN scale, dropout masks) needed by the backward pass.
    """

    graph: NetworkGraph
    weights: WeightStore
    outputs: dict[str, np.ndarray]
    dtype: np.dtype
    grads: dict[str, np.ndarray] = field(default_factory=dict)
    aux: dict[str, object] = field(default_factory=dict)


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.isfinite(arr).all():
        raise EngineError(f"layer '{name}' produced non-finite values")


def forward(
    graph: NetworkGraph,
    weights: WeightStore,
    batch: np.ndarray,
    *,
    dtype=STORAGE_DTYPE,
    train: bool = False,
    seed: int = 0,
) -> ActivationCache:
    """Run the network on `batch` (N, C, H, W) and cache every layer output.

    Dropout is the identity unless train=True, in which case each dropout
    layer draws a Bernoulli mask from its own substream of `seed`.
    """
    batch = np.asarray(batch)
    if batch.ndim != 4:
        raise EngineError(f"batch must be (N, C, H, W), got shape {batch.shape}")
    expected = graph.shapes[graph.input_name]
    if tuple(batch.shape[1:]) != expected:
        raise EngineError(
            f"batch per-sample shape {tuple(batch.shape[1:])} does not match "
            f"input layer '{graph.input_name}' shape {expected}"
        )

    dtype = np.dtype(dtype)
    cache = ActivationCache(graph=graph, weights=weights, outputs={}, dtype=dtype)
    for name in graph.topo_order:
        spec = graph.layers[name]
        xs = [cache.outputs[i] for i in spec.inputs]
        if spec.kind == "input":
            out = batch.astype(dtype, copy=False)
        elif spec.kind == "conv":
            p = _params(weights, name)
            out = L.conv_forward(
                xs[0], p.weight.astype(dtype), p.bias.astype(dtype), spec.stride, spec.pad
            )
        elif spec.kind == "fc":
            p = _params(weights, name)
            out = L.fc_forward(xs[0], p.weight.astype(dtype), p.bias.astype(dtype))
        elif spec.kind == "relu":
            out = L.relu_forward(xs[0])
        elif spec.kind == "maxpool":
            out, arg = L.maxpool_forward(xs[0], spec.kernel, spec.stride)
            cache.aux[name] = arg
        elif spec.kind == "avgpool":
            out = L.avgpool_forward(xs[0], spec.kernel, spec.stride)
        elif spec.kind == "lrn":
            out, scale = L.lrn_forward(
                xs[0], spec.local_size, spec.lrn_alpha, spec.lrn_beta, spec.lrn_k
            )
            cache.aux[name] = scale
        elif spec.kind == "dropout":
            rng = substream(seed, "dropout", name) if train else None
            out, mask = L.dropout_forward(xs[0], spec.ratio, rng)
            cache.aux[name] = mask
        elif spec.kind == "concat":
            out = L.concat_forward(xs)
        elif spec.kind == "scale":
            out = np.asarray(spec.factor, dtype=dtype) * xs[0]
        else:  # pragma: no cover - build_graph rejects unknown kinds
            raise EngineError(f"layer '{name}' has unknown kind '{spec.kind}'")
        _check_finite(name, out)
        cache.outputs[name] = out
    return cache


def _params(weights: WeightStore, name: str) -> AffineParams:
    try:
        return weights[name]
    except KeyError:
        raise EngineError(f"missing weights for affine layer '{name}'") from None


def backward(
    graph: NetworkGraph,
    weights: WeightStore,
    cache: ActivationCache,
    top_grad: np.ndarray,
) -> dict[str, AffineParams]:
    """Backpropagate `top_grad` through the cached forward pass.

    Returns the loss gradients for every affine layer's (weight, bias); the
    bias gradient is the weight rule with inputs replaced by ones.  Also
    fills cache.grads with the gradient at every layer output.
    """
    if cache.graph is not graph or cache.weights is not weights:
        raise EngineError("activation cache is stale: produced by a different forward call")
    out_arr = cache.outputs[graph.output_name]
    top_grad = np.asarray(top_grad, dtype=cache.dtype)
    if top_grad.shape != out_arr.shape:
        raise EngineError(
            f"top gradient shape {top_grad.shape} does not match output shape {out_arr.shape}"
        )

    acc: dict[str, np.ndarray] = {graph.output_name: top_grad}
    param_grads: dict[str, AffineParams] = {}
    cache.grads = {}
    for name in reversed(graph.topo_order):
        spec = graph.layers[name]
        g = acc.pop(name, None)
        if g is None:
            g = np.zeros_like(cache.outputs[name])
        cache.grads[name] = g
        if spec.kind == "input":
            continue
        xs = [cache.outputs[i] for i in spec.inputs]
        if spec.kind == "conv":
            p = weights[name]
            dx, dw, db = L.conv_backward(
                g, xs[0], p.weight.astype(cache.dtype), spec.stride, spec.pad
            )
            param_grads[name] = AffineParams(dw, db)
            dxs = [dx]
        elif spec.kind == "fc":
            p = weights[name]
            dx, dw, db = L.fc_backward(g, xs[0], p.weight.astype(cache.dtype))
            param_grads[name] = AffineParams(dw, db)
            dxs = [dx]
        elif spec.kind == "relu":
            dxs = [L.relu_backward(g, xs[0])]
        elif spec.kind == "maxpool":
            dxs = [L.maxpool_backward(g, xs[0].shape, cache.aux[name], spec.kernel, spec.stride)]
        elif spec.kind == "avgpool":
            dxs = [L.avgpool_backward(g, xs[0].shape, spec.kernel, spec.stride)]
        elif spec.kind == "lrn":
            dxs = [
                L.lrn_backward(
                    g, xs[0], cache.aux[name], spec.local_size, spec.lrn_alpha, spec.lrn_beta
                )
            ]
        elif spec.kind == "dropout":
            dxs = [L.dropout_backward(g, cache.aux[name])]
        elif spec.kind == "concat":
            dxs = L.concat_backward(g, [x.shape[1] for x in xs])
        elif spec.kind == "scale":
            dxs = [np.asarray(spec.factor, dtype=cache.dtype) * g]
        else:  # pragma: no cover
            raise EngineError(f"layer '{name}' has unknown kind '{spec.kind}'")
        for src, dx in zip(spec.inputs, dxs):
            if src in acc:
                acc[src] = acc[src] + dx
            else:
                acc[src] = dx
    return param_grads


def draw_random_loss(output_shape: tuple[int, ...], seed: int) -> np.ndarray:
    """I.i.d. standard-normal top gradients, one independent draw per image.

    `output_shape` is the batched network output shape (N, C, 1, 1); the
    same seed reproduces the same tensor bit for bit.
    """
    rng = np.random.default_rng(seed)
    return rng.standard_normal(output_shape)
