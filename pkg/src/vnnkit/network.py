"""Dense feed-forward ReLU networks and exact evaluation on them.

A :class:`Network` is an ordered stack of dense layers. Hidden layers use
ReLU, the final layer is identity (logits; predicted class = argmax). Values
are immutable after construction so networks can be shared freely across
threads.

Each layer keeps a nonzero mask over its weight matrix; the forward pass
drops all-zero rows and columns from the matvec, so sparsified networks
evaluate faster without a separate sparse code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InputShapeError, NetworkValidationError

RELU = "relu"
IDENTITY = "identity"

_ACTIVATIONS = (RELU, IDENTITY)


def _as_readonly(a, shape_hint=None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Layer:
    """One dense layer: ``act(W x + b)`` with W of shape (out_dim, in_dim)."""

    weights: np.ndarray
    biases: np.ndarray
    activation: str = RELU

    def __post_init__(self):
        w = _as_readonly(self.weights)
        b = _as_readonly(self.biases)
        if w.ndim != 2:
            raise NetworkValidationError(f"weights must be 2-D, got ndim={w.ndim}")
        if b.ndim != 1 or b.shape[0] != w.shape[0]:
            raise NetworkValidationError(
                f"biases shape {b.shape} does not match weight rows {w.shape[0]}"
            )
        if self.activation not in _ACTIVATIONS:
            raise NetworkValidationError(f"unknown activation {self.activation!r}")
        if not np.all(np.isfinite(w)) or not np.all(np.isfinite(b)):
            raise NetworkValidationError("weights and biases must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)
        # Skip-zero matvec support: drop all-zero rows/columns once, up front.
        used_cols = np.flatnonzero(np.any(w != 0.0, axis=0))
        used_rows = np.flatnonzero(np.any(w != 0.0, axis=1))
        packed = np.ascontiguousarray(w[np.ix_(used_rows, used_cols)])
        object.__setattr__(self, "_used_cols", used_cols)
        object.__setattr__(self, "_used_rows", used_rows)
        object.__setattr__(self, "_packed", packed)

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    def preactivation(self, x: np.ndarray) -> np.ndarray:
        """``W x + b`` using the packed (zero-row/column-free) matvec."""
        z = self.biases.copy()
        rows = self._used_rows
        if rows.size:
            z[rows] += self._packed @ x[self._used_cols]
        return z

    def preactivation_batch(self, xs: np.ndarray) -> np.ndarray:
        z = np.tile(self.biases, (xs.shape[0], 1))
        rows = self._used_rows
        if rows.size:
            z[:, rows] += xs[:, self._used_cols] @ self._packed.T
        return z

    def apply_activation(self, z: np.ndarray) -> np.ndarray:
        if self.activation == RELU:
            return np.maximum(z, 0.0)
        return z


class Network:
    """An immutable dense ReLU network.

    Layers chain by shape (in_dim of layer k+1 == out_dim of layer k), all
    hidden layers are ReLU and the output layer is identity.
    """

    def __init__(self, layers: Iterable[Layer]):
        layers = tuple(
            l if isinstance(l, Layer) else Layer(*l) for l in layers
        )
        if not layers:
            raise NetworkValidationError("network needs at least one layer")
        for k in range(1, len(layers)):
            if layers[k].in_dim != layers[k - 1].out_dim:
                raise NetworkValidationError(
                    f"layer {k + 1} expects in_dim {layers[k].in_dim}, "
                    f"but layer {k} outputs {layers[k - 1].out_dim}"
                )
        for k, layer in enumerate(layers[:-1]):
            if layer.activation != RELU:
                raise NetworkValidationError(f"hidden layer {k + 1} must be relu")
        if layers[-1].activation != IDENTITY:
            raise NetworkValidationError("output layer must be identity")
        self.layers = layers

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def widths(self) -> tuple[int, ...]:
        """(in_dim, width of every layer output)."""
        return (self.in_dim,) + tuple(l.out_dim for l in self.layers)

    def with_layer(self, index: int, weights, biases) -> "Network":
        """Copy of this network with layer ``index`` (1-based) replaced."""
        if not 1 <= index <= self.num_layers:
            raise IndexError(f"layer index {index} out of range")
        old = self.layers[index - 1]
        new = Layer(weights, biases, old.activation)
        layers = list(self.layers)
        layers[index - 1] = new
        return Network(layers)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return len(self.layers) == len(other.layers) and all(
            a.activation == b.activation
            and np.array_equal(a.weights, b.weights)
            and np.array_equal(a.biases, b.biases)
            for a, b in zip(self.layers, other.layers)
        )

    def __repr__(self) -> str:
        arch = "->".join(str(w) for w in self.widths)
        return f"Network({arch})"


def _check_input(net: Network, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != net.in_dim:
        raise InputShapeError(
            f"input has shape {x.shape}, network expects ({net.in_dim},)"
        )
    return x


def forward(net: Network, x) -> list[np.ndarray]:
    """Evaluate the network, returning every layer value x(0)..x(N).

    The returned list starts with the input and ends with the logits.
    """
    x = _check_input(net, x)
    values = [x]
    for layer in net.layers:
        values.append(layer.apply_activation(layer.preactivation(values[-1])))
    return values


def forward_with_preactivations(
    net: Network, x
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Like :func:`forward` but also returns per-layer pre-activations."""
    x = _check_input(net, x)
    values = [x]
    pres = []
    for layer in net.layers:
        z = layer.preactivation(values[-1])
        pres.append(z)
        values.append(layer.apply_activation(z))
    return values, pres


def forward_batch(net: Network, xs: np.ndarray) -> np.ndarray:
    """Logits for a batch of inputs, shape (n, out_dim)."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != net.in_dim:
        raise InputShapeError(
            f"batch has shape {xs.shape}, network expects (n, {net.in_dim})"
        )
    h = xs
    for layer in net.layers:
        h = layer.apply_activation(layer.preactivation_batch(h))
    return h


def predict(net: Network, x) -> int:
    """Predicted class: argmax of the logits."""
    return int(np.argmax(forward(net, x)[-1]))


def activation_pattern(net: Network, x) -> list[np.ndarray]:
    """Per hidden layer, a boolean vector: pre-activation strictly positive.

    An exactly-zero pre-activation counts as inactive.
    """
    _, pres = forward_with_preactivations(net, x)
    return [z > 0.0 for z in pres[:-1]]


@dataclass(frozen=True)
class NonzeroCount:
    per_layer: tuple[int, ...]
    total: int


def count_nonzeros(net: Network, tol: float = 0.0) -> NonzeroCount:
    """Entries of every weight matrix and bias vector with |v| > tol."""
    if tol < 0:
        raise ValueError("tol must be >= 0")
    per_layer = tuple(
        int(np.count_nonzero(np.abs(l.weights) > tol))
        + int(np.count_nonzero(np.abs(l.biases) > tol))
        for l in net.layers
    )
    return NonzeroCount(per_layer, sum(per_layer))


def parameter_count(net: Network) -> int:
    return sum(l.weights.size + l.biases.size for l in net.layers)


def l1_mass(net: Network, layer_index: int | None = None) -> float:
    """Sum of |W| + |b|, for one layer (1-based) or the whole network."""
    if layer_index is None:
        layers: Sequence[Layer] = net.layers
    else:
        layers = [net.layers[layer_index - 1]]
    return float(
        sum(np.abs(l.weights).sum() + np.abs(l.biases).sum() for l in layers)
    )


def margin(logits: np.ndarray, label: int) -> float:
    """Logit gap between ``label`` and the best other class."""
    others = np.delete(logits, label)
    return float(logits[label] - others.max())
