"""Layer zoo: dense, 2-D convolution, max pooling, message passing, graph
convolution, flatten, and per-graph mean pooling, plus the four reference
stacks with their per-layer objective tags.

Every layer is a pure function (spec, params, input) -> output recorded on
the caller's tape. Parameter initialization is Glorot-uniform weights with
zero biases, bit-reproducible from (spec, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tensor as T
from .graphs import GraphBatch
from .tensor import ContractError, DimensionError, Tensor

ACTIVATIONS = ("relu", "sigmoid", "tanh", "none", "softmax")
KINDS = ("dense", "conv2d", "maxpool2d", "message_passing", "graph_conv",
         "flatten", "graph_pool")
PARAMETERIZED = ("dense", "conv2d", "message_passing", "graph_conv")

TAG_MAXMI_X = "MaxMI_X"
TAG_MAXMI_Y = "MaxMI_Y"
TAG_MAXMI_Y_LABELED = "MaxMI_Y_labeled"
TAG_CROSS_ENTROPY = "CrossEntropy"


@dataclass(frozen=True)
class LayerSpec:
    """One layer's kind and attributes.

    ``in_dim``/``out_dim`` double as channel counts for conv2d. ``kernel``,
    ``stride`` and ``padding`` apply to conv2d/maxpool2d only.
    """

    kind: str
    in_dim: int = 0
    out_dim: int = 0
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    activation: str = "none"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown layer kind '{self.kind}'")
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation '{self.activation}'")
        if self.kind in PARAMETERIZED and (self.in_dim <= 0 or self.out_dim <= 0):
            raise ContractError(f"{self.kind}: in_dim/out_dim must be positive")
        if self.kind in ("conv2d", "maxpool2d"):
            if self.kernel < 1:
                raise ContractError(f"{self.kind}: kernel size must be >= 1")
            if self.stride < 1:
                raise ContractError(f"{self.kind}: stride must be >= 1")
        if self.kind in ("maxpool2d", "flatten", "graph_pool") and self.activation != "none":
            raise ContractError(f"{self.kind}: takes no activation")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "in_dim": self.in_dim, "out_dim": self.out_dim,
            "kernel": self.kernel, "stride": self.stride, "padding": self.padding,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(**d)


@dataclass
class LayerParams:
    """Named parameter tensors for one layer plus the seed that made them."""

    tensors: dict
    init_seed: int


def has_params(spec: LayerSpec) -> bool:
    return spec.kind in PARAMETERIZED


def output_shape(spec: LayerSpec, input_shape: tuple) -> tuple:
    """Deterministic output shape for a given input shape."""
    if spec.kind == "dense":
        if len(input_shape) != 2 or input_shape[1] != spec.in_dim:
            raise DimensionError(f"dense: expected [n, {spec.in_dim}], got {input_shape}")
        return (input_shape[0], spec.out_dim)
    if spec.kind == "conv2d":
        if len(input_shape) != 4 or input_shape[1] != spec.in_dim:
            raise DimensionError(f"conv2d: expected [n, {spec.in_dim}, h, w], got {input_shape}")
        n, _, h, w = input_shape
        oh = (h + 2 * spec.padding - spec.kernel) // spec.stride + 1
        ow = (w + 2 * spec.padding - spec.kernel) // spec.stride + 1
        return (n, spec.out_dim, oh, ow)
    if spec.kind == "maxpool2d":
        if len(input_shape) != 4:
            raise DimensionError(f"maxpool2d: expected 4-D input, got {input_shape}")
        n, c, h, w = input_shape
        return (n, c, (h - spec.kernel) // spec.stride + 1,
                (w - spec.kernel) // spec.stride + 1)
    if spec.kind == "flatten":
        n = input_shape[0]
        return (n, int(np.prod(input_shape[1:], dtype=int)))
    if spec.kind in ("message_passing", "graph_conv"):
        if len(input_shape) != 2 or input_shape[1] != spec.in_dim:
            raise DimensionError(f"{spec.kind}: expected [n, {spec.in_dim}], got {input_shape}")
        return (input_shape[0], spec.out_dim)
    if spec.kind == "graph_pool":
        raise ContractError("graph_pool output shape depends on the graph batch")
    raise ContractError(f"unknown layer kind '{spec.kind}'")


def _glorot(rng: np.random.Generator, shape: tuple, fan_in: int, fan_out: int):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(spec: LayerSpec, seed: int, owner=None) -> LayerParams:
    """Glorot-uniform weights, zero biases, deterministic in (spec, seed)."""
    rng = np.random.default_rng(seed)
    tensors: dict = {}
    if spec.kind == "dense":
        w = _glorot(rng, (spec.in_dim, spec.out_dim), spec.in_dim, spec.out_dim)
        tensors["weight"] = Tensor(w, requires_grad=True, owner=owner)
        tensors["bias"] = Tensor(np.zeros(spec.out_dim), requires_grad=True, owner=owner)
    elif spec.kind == "conv2d":
        k = spec.kernel
        fan_in, fan_out = spec.in_dim * k * k, spec.out_dim * k * k
        w = _glorot(rng, (spec.out_dim, spec.in_dim, k, k), fan_in, fan_out)
        tensors["weight"] = Tensor(w, requires_grad=True, owner=owner)
        tensors["bias"] = Tensor(np.zeros(spec.out_dim), requires_grad=True, owner=owner)
    elif spec.kind == "message_passing":
        shape = (spec.in_dim, spec.out_dim)
        tensors["w_self"] = Tensor(_glorot(rng, shape, spec.in_dim, spec.out_dim),
                                   requires_grad=True, owner=owner)
        tensors["w_msg"] = Tensor(_glorot(rng, shape, spec.in_dim, spec.out_dim),
                                  requires_grad=True, owner=owner)
        tensors["bias"] = Tensor(np.zeros(spec.out_dim), requires_grad=True, owner=owner)
    elif spec.kind == "graph_conv":
        w = _glorot(rng, (spec.in_dim, spec.out_dim), spec.in_dim, spec.out_dim)
        tensors["weight"] = Tensor(w, requires_grad=True, owner=owner)
    return LayerParams(tensors=tensors, init_seed=seed)


def apply_activation(x: Tensor, name: str) -> Tensor:
    if name == "relu":
        return T.relu(x)
    if name == "sigmoid":
        return T.sigmoid(x)
    if name == "tanh":
        return T.tanh(x)
    if name == "softmax":
        return T.softmax(x, axis=-1)
    if name == "none":
        return x
    raise ContractError(f"unknown activation '{name}'")


def layer_forward(spec: LayerSpec, params: Optional[LayerParams], x: Tensor,
                  graph: Optional[GraphBatch] = None) -> Tensor:
    """Run one layer. ``graph`` is required for the graph kinds and must be
    absent elsewhere."""
    needs_graph = spec.kind in ("message_passing", "graph_conv", "graph_pool")
    if needs_graph and graph is None:
        raise ContractError(f"{spec.kind}: graph context required")

    if spec.kind == "dense":
        t = params.tensors
        return apply_activation(T.add(T.matmul(x, t["weight"]), t["bias"]), spec.activation)
    if spec.kind == "conv2d":
        t = params.tensors
        out = T.conv2d(x, t["weight"], t["bias"], stride=spec.stride, padding=spec.padding)
        return apply_activation(out, spec.activation)
    if spec.kind == "maxpool2d":
        return T.maxpool2d(x, kernel=spec.kernel, stride=spec.stride)
    if spec.kind == "flatten":
        n = x.shape[0]
        return T.reshape(x, (n, int(np.prod(x.shape[1:], dtype=int))))
    if spec.kind == "message_passing":
        t = params.tensors
        neigh = T.const_matmul(graph.adjacency, x)  # sum over 1-hop neighbors
        out = T.add(T.add(T.matmul(x, t["w_self"]), T.matmul(neigh, t["w_msg"])), t["bias"])
        return apply_activation(out, spec.activation)
    if spec.kind == "graph_conv":
        t = params.tensors
        out = T.matmul(T.const_matmul(graph.normalized_adjacency, x), t["weight"])
        return apply_activation(out, spec.activation)
    if spec.kind == "graph_pool":
        return T.const_matmul(graph.pool_matrix, x)
    raise ContractError(f"unknown layer kind '{spec.kind}'")


# ---------------------------------------------------------------------------
# Reference stacks
# ---------------------------------------------------------------------------

def reference_architecture(name: str) -> list:
    """The four reference stacks as (LayerSpec, objective-tag) lists.

    Parameter-free layers (pooling, flatten) carry the tag of the module
    they belong to; ``group_modules`` turns the flat stack into module
    index groups (a new module starts at each parameterized layer).
    """
    if name == "adult_mlp":
        return [
            (LayerSpec("dense", 104, 64, activation="relu"), TAG_MAXMI_X),
            (LayerSpec("dense", 64, 16, activation="relu"), TAG_MAXMI_Y),
            (LayerSpec("dense", 16, 2, activation="softmax"), TAG_CROSS_ENTROPY),
        ]
    if name == "mnist_cnn":
        return [
            (LayerSpec("conv2d", 1, 8, kernel=3, stride=1, padding=1,
                       activation="relu"), TAG_MAXMI_X),
            (LayerSpec("maxpool2d", kernel=2, stride=2), TAG_MAXMI_X),
            (LayerSpec("conv2d", 8, 16, kernel=3, stride=1, padding=1,
                       activation="relu"), TAG_MAXMI_X),
            (LayerSpec("maxpool2d", kernel=2, stride=2), TAG_MAXMI_X),
            (LayerSpec("flatten"), TAG_MAXMI_X),
            (LayerSpec("dense", 784, 64, activation="relu"), TAG_MAXMI_Y),
            (LayerSpec("dense", 64, 10, activation="softmax"), TAG_CROSS_ENTROPY),
        ]
    if name == "mutagenicity_mpgnn":
        return [
            (LayerSpec("dense", 14, 32, activation="relu"), TAG_MAXMI_X),
            (LayerSpec("message_passing", 32, 32, activation="relu"), TAG_MAXMI_X),
            (LayerSpec("message_passing", 32, 32, activation="relu"), TAG_MAXMI_Y),
            (LayerSpec("graph_pool"), TAG_MAXMI_Y),
            (LayerSpec("dense", 32, 2, activation="softmax"), TAG_CROSS_ENTROPY),
        ]
    if name == "cora_gcn":
        return [
            (LayerSpec("graph_conv", 1433, 64, activation="relu"), TAG_MAXMI_X),
            (LayerSpec("graph_conv", 64, 32, activation="relu"), TAG_MAXMI_Y_LABELED),
            (LayerSpec("dense", 32, 7, activation="softmax"), TAG_CROSS_ENTROPY),
        ]
    raise ContractError(f"unknown architecture '{name}'")


ARCHITECTURES = ("adult_mlp", "mnist_cnn", "mutagenicity_mpgnn", "cora_gcn")


def group_modules(stack: list) -> list:
    """Group a flat (LayerSpec, tag) stack into modules: a new module starts
    at every parameterized layer; parameter-free layers join the module in
    progress (pooling after a conv, flatten/graph_pool before the module
    boundary)."""
    groups: list = []
    for i, (spec, _tag) in enumerate(stack):
        if has_params(spec) or not groups:
            groups.append([i])
        else:
            groups[-1].append(i)
    return groups
