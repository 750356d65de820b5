from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.errors import InputShapeError, TrainingDivergedError
from src.numkit.rng import SeededRng

Activation = Literal["tanh", "relu", "identity"]

Array = NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class DenseNet:
    """Feed-forward network, weights stored as (out, in) matrices.

    The activation applies to hidden layers only; the output layer is linear.
    Instances are treated as immutable: updates build a new net.
    """

    layer_sizes: tuple[int, ...]
    weights: tuple[Array, ...]
    biases: tuple[Array, ...]
    activation: Activation = "tanh"

    def __post_init__(self) -> None:
        if len(self.layer_sizes) < 2 or any(int(n) <= 0 for n in self.layer_sizes):
            raise InputShapeError(f"Invalid layer sizes: {self.layer_sizes!r}")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise InputShapeError("Parameter count does not match layer sizes")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            n_in, n_out = self.layer_sizes[i], self.layer_sizes[i + 1]
            if w.shape != (n_out, n_in) or b.shape != (n_out,):
                raise InputShapeError(
                    f"Layer {i}: expected W{(n_out, n_in)} b{(n_out,)}, got W{w.shape} b{b.shape}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise TrainingDivergedError(f"Non-finite parameters in layer {i}")

    @classmethod
    def init(
        cls,
        layer_sizes: Sequence[int],
        rng: SeededRng,
        activation: Activation = "tanh",
        zero_last: bool = False,
    ) -> DenseNet:
        """Glorot-uniform weights, zero biases.

        `zero_last` zeroes the output layer so a freshly built head predicts 0.
        """

        sizes = tuple(int(n) for n in layer_sizes)
        weights: list[Array] = []
        biases: list[Array] = []
        for i in range(len(sizes) - 1):
            n_in, n_out = sizes[i], sizes[i + 1]
            limit = np.sqrt(6.0 / (n_in + n_out))
            w = rng.uniform(-limit, limit, size=(n_out, n_in))
            if zero_last and i == len(sizes) - 2:
                w = np.zeros_like(w)
            weights.append(w)
            biases.append(np.zeros(n_out))
        return cls(
            layer_sizes=sizes, weights=tuple(weights), biases=tuple(biases), activation=activation
        )

    @classmethod
    def zeros(cls, layer_sizes: Sequence[int], activation: Activation = "tanh") -> DenseNet:
        sizes = tuple(int(n) for n in layer_sizes)
        weights = tuple(np.zeros((sizes[i + 1], sizes[i])) for i in range(len(sizes) - 1))
        biases = tuple(np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1))
        return cls(layer_sizes=sizes, weights=weights, biases=biases, activation=activation)

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def replace(self, weights: Sequence[Array], biases: Sequence[Array]) -> DenseNet:
        return DenseNet(
            layer_sizes=self.layer_sizes,
            weights=tuple(weights),
            biases=tuple(biases),
            activation=self.activation,
        )

    def __call__(self, x: ArrayLike) -> Array:
        return forward(self, x)


@dataclass(frozen=True, eq=False)
class NetGrads:
    weights: tuple[Array, ...]
    biases: tuple[Array, ...]
    inputs: Array

    def scaled(self, c: float) -> NetGrads:
        return NetGrads(
            weights=tuple(c * w for w in self.weights),
            biases=tuple(c * b for b in self.biases),
            inputs=c * self.inputs,
        )

    def __add__(self, other: NetGrads) -> NetGrads:
        return NetGrads(
            weights=tuple(a + b for a, b in zip(self.weights, other.weights)),
            biases=tuple(a + b for a, b in zip(self.biases, other.biases)),
            inputs=self.inputs + other.inputs,
        )

    def flat(self) -> Array:
        parts = [p.ravel() for pair in zip(self.weights, self.biases) for p in pair]
        return np.concatenate(parts) if parts else np.zeros(0)


def zero_grads(net: DenseNet) -> NetGrads:
    return NetGrads(
        weights=tuple(np.zeros_like(w) for w in net.weights),
        biases=tuple(np.zeros_like(b) for b in net.biases),
        inputs=np.zeros(net.in_dim),
    )


def _as_input(net: DenseNet, x: ArrayLike) -> Array:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim not in (1, 2) or arr.shape[-1] != net.in_dim:
        raise InputShapeError(f"Expected input of width {net.in_dim}, got shape {arr.shape}")
    return arr


def _activate(z: Array, activation: Activation) -> Array:
    if activation == "tanh":
        return np.tanh(z)
    if activation == "relu":
        return np.maximum(z, 0.0)
    return z


def _activation_grad(z: Array, out: Array, activation: Activation) -> Array:
    if activation == "tanh":
        return 1.0 - out * out
    if activation == "relu":
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def forward(net: DenseNet, x: ArrayLike) -> Array:
    """Evaluate the net on one input vector or a (batch, in) matrix."""

    h = _as_input(net, x)
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w.T + b
        if i < last:
            h = _activate(h, net.activation)
    return h


def _trace(net: DenseNet, x: Array) -> tuple[list[Array], list[Array]]:
    inputs: list[Array] = [x]
    pre: list[Array] = []
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        pre.append(z)
        h = _activate(z, net.activation) if i < last else z
        inputs.append(h)
    return inputs, pre


def backward(net: DenseNet, x: ArrayLike, dL_dy: ArrayLike) -> NetGrads:
    """Exact chain rule for the scalar loss whose output cotangent is `dL_dy`.

    Batched inputs sum parameter gradients over the batch; the input gradient
    keeps the batch axis.
    """

    xs = _as_input(net, x)
    batched = xs.ndim == 2
    X = np.atleast_2d(xs)
    G = np.atleast_2d(np.asarray(dL_dy, dtype=np.float64))
    if G.shape != (X.shape[0], net.out_dim):
        raise InputShapeError(
            f"Output gradient shape {G.shape} does not match ({X.shape[0]}, {net.out_dim})"
        )

    inputs, pre = _trace(net, X)
    n_layers = len(net.weights)
    gw: list[Array] = [np.zeros(0)] * n_layers
    gb: list[Array] = [np.zeros(0)] * n_layers
    g = G
    for i in reversed(range(n_layers)):
        if i < n_layers - 1:
            g = g * _activation_grad(pre[i], inputs[i + 1], net.activation)
        gw[i] = g.T @ inputs[i]
        gb[i] = g.sum(axis=0)
        g = g @ net.weights[i]

    return NetGrads(weights=tuple(gw), biases=tuple(gb), inputs=g if batched else g[0])


def flatten_params(net: DenseNet) -> Array:
    parts = [p.ravel() for pair in zip(net.weights, net.biases) for p in pair]
    return np.concatenate(parts)


def unflatten_params(net: DenseNet, flat: ArrayLike) -> DenseNet:
    vec = np.asarray(flat, dtype=np.float64)
    if vec.shape != (net.n_params,):
        raise InputShapeError(f"Expected {net.n_params} parameters, got {vec.shape}")
    weights: list[Array] = []
    biases: list[Array] = []
    pos = 0
    for w, b in zip(net.weights, net.biases):
        weights.append(vec[pos : pos + w.size].reshape(w.shape).copy())
        pos += w.size
        biases.append(vec[pos : pos + b.size].copy())
        pos += b.size
    return net.replace(weights, biases)
