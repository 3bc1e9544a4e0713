"""Graph convolutional encoder producing node embeddings on the gradient tape."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ValidationError
from .graphs import Graph, normalized_adjacency
from .tensor import (
    Node,
    add,
    constant,
    divide,
    matmul,
    matmul_canonical,
    multiply,
    parameter,
    relu,
    sqrt,
    square,
    subtract,
)

DEFAULT_HIDDEN_DIM = 64
DEFAULT_OUTPUT_DIM = 32
STANDARDIZE_MOMENTUM = 0.9
STANDARDIZE_EPS = 1e-5


@dataclass
class GnnParams:
    """Encoder layer weights plus the switches that alter the forward pass.

    ``weights`` are tape leaves so gradients accumulate on them during
    training. Running statistics back the inference-time standardization
    path and are updated as a side effect of training-mode encoding.
    """

    weights: list[Node]
    batch_norm: bool = False
    dropout: float = 0.0
    final_activation: bool = False
    running_mean: list[np.ndarray] = field(default_factory=list)
    running_var: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.weights:
            raise ValidationError("encoder needs at least one layer")
        for pos, (left, right) in enumerate(zip(self.weights, self.weights[1:])):
            if left.shape[1] != right.shape[0]:
                raise DimensionError(
                    f"layer {pos} output {left.shape[1]} does not feed "
                    f"layer {pos + 1} input {right.shape[0]}"
                )
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError(f"dropout rate {self.dropout} outside [0, 1)")
        if not self.running_mean:
            hidden = [w.shape[1] for w in self.weights[:-1]]
            self.running_mean = [np.zeros(width) for width in hidden]
            self.running_var = [np.ones(width) for width in hidden]

    @property
    def layer_count(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def dimension_chain(self) -> tuple[int, ...]:
        return (self.input_dim,) + tuple(w.shape[1] for w in self.weights)


def init_params(
    dims,
    seed: int = 0,
    batch_norm: bool = False,
    dropout: float = 0.0,
    final_activation: bool = False,
) -> GnnParams:
    """Glorot-uniform weights for the dimension chain ``dims``, seeded."""
    dims = [int(d) for d in dims]
    if len(dims) < 2:
        raise ValidationError("dimension chain needs input and output widths")
    if any(d <= 0 for d in dims):
        raise ValidationError("layer widths must be positive")
    rng = np.random.default_rng(seed)
    weights = []
    for fan_in, fan_out in zip(dims, dims[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(parameter(rng.uniform(-bound, bound, size=(fan_in, fan_out))))
    return GnnParams(
        weights,
        batch_norm=batch_norm,
        dropout=dropout,
        final_activation=final_activation,
    )


def _standardize(z: Node, params: GnnParams, layer: int, training: bool) -> Node:
    width = z.shape[1]
    if training:
        ones = constant(np.full((1, z.shape[0]), 1.0 / z.shape[0]))
        mean = matmul(ones, z)
        centered = subtract(z, mean)
        var = matmul(ones, square(centered))
        m = STANDARDIZE_MOMENTUM
        params.running_mean[layer] = (
            m * params.running_mean[layer] + (1.0 - m) * mean.value[0]
        )
        params.running_var[layer] = (
            m * params.running_var[layer] + (1.0 - m) * var.value[0]
        )
        std = sqrt(add(var, constant(np.full((1, width), STANDARDIZE_EPS))))
        return divide(centered, std)
    mean = constant(params.running_mean[layer][None, :])
    std = constant(np.sqrt(params.running_var[layer] + STANDARDIZE_EPS)[None, :])
    return divide(subtract(z, mean), std)


def encode(
    g: Graph,
    params: GnnParams,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Node:
    """Node embeddings for ``g`` as an n x output_dim tape node.

    Each layer applies the degree-normalized propagation followed by the
    layer weights; hidden layers pass through relu (plus optional
    standardization and dropout), the final layer stays linear unless
    ``final_activation`` is set so embeddings keep unrestricted sign.
    """
    if g.features.shape[1] != params.input_dim:
        raise DimensionError(
            f"feature dim {g.features.shape[1]} != encoder input {params.input_dim}"
        )
    propagate = constant(normalized_adjacency(g))
    z = constant(g.features)
    last = params.layer_count - 1
    for i, w in enumerate(params.weights):
        # canonical summation keeps the embedding rows bitwise identical
        # under node relabeling, which the distance layer relies on
        z = matmul(matmul_canonical(propagate, z), w)
        if i == last:
            if params.final_activation:
                z = relu(z)
            break
        if params.batch_norm:
            z = _standardize(z, params, i, training)
        z = relu(z)
        if training and params.dropout > 0.0:
            if rng is None:
                raise ValidationError("dropout in training mode needs an rng")
            mask = (rng.random(z.shape) >= params.dropout) / (1.0 - params.dropout)
            z = multiply(z, constant(mask))
    return z
