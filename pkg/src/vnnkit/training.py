"""Minimal SGD trainer used only to produce desk-scale fixture networks.

Not a serious training loop: plain mini-batch SGD on softmax cross-entropy,
deterministic per seed. Good enough to get >95% accuracy on blob fixtures.
"""

from __future__ import annotations

import numpy as np

from .datasets import TRAIN, Dataset
from .errors import TrainingDivergedError
from .network import IDENTITY, RELU, Layer, Network


def _init_params(dims: list[int], rng: np.random.Generator):
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        scale = np.sqrt(2.0 / fan_in)
        weights.append(rng.normal(0.0, scale, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_fixture(
    dataset: Dataset,
    hidden: list[int],
    seed: int,
    epochs: int,
    lr: float = 0.5,
    batch_size: int = 16,
) -> Network:
    """Train a ReLU classifier on the dataset's train split.

    ``hidden`` lists the hidden-layer widths; input/output dims come from the
    dataset. Returns the seeded initialization unchanged when epochs == 0.
    """
    xs, ys = dataset.split(TRAIN)
    n_classes = dataset.num_classes
    dims = [dataset.dim] + list(hidden) + [n_classes]
    rng = np.random.default_rng(seed)
    weights, biases = _init_params(dims, rng)
    n = len(xs)

    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            xb, yb = xs[idx], ys[idx]
            # forward
            acts = [xb]
            for k, (w, b) in enumerate(zip(weights, biases)):
                z = acts[-1] @ w.T + b
                acts.append(np.maximum(z, 0.0) if k < len(weights) - 1 else z)
            probs = _softmax(acts[-1])
            loss = -np.log(probs[np.arange(len(yb)), yb] + 1e-12).mean()
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"loss became {loss}")
            # backward
            grad = probs
            grad[np.arange(len(yb)), yb] -= 1.0
            grad /= len(yb)
            for k in range(len(weights) - 1, -1, -1):
                gw = grad.T @ acts[k]
                gb = grad.sum(axis=0)
                if k > 0:
                    grad = (grad @ weights[k]) * (acts[k] > 0.0)
                weights[k] -= lr * gw
                biases[k] -= lr * gb

    layers = [
        Layer(w, b, RELU if k < len(weights) - 1 else IDENTITY)
        for k, (w, b) in enumerate(zip(weights, biases))
    ]
    return Network(layers)


def accuracy(net: Network, xs: np.ndarray, ys: np.ndarray) -> float:
    from .network import forward_batch

    if len(xs) == 0:
        return 0.0
    preds = forward_batch(net, xs).argmax(axis=1)
    return float(np.mean(preds == ys))
