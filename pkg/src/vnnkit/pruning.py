"""Magnitude-based pruning (MBP) baselines.

Zeroes the smallest-magnitude parameters with no feasibility guarantee, for
comparison against the constrained sparsifier. Biases take part in the pool
alongside weights. Ties in |value| break by (layer, row, col) position, with
a row's bias ordered after its weights, so results are deterministic.
"""

from __future__ import annotations

import numpy as np

from .network import Network, count_nonzeros

GLOBAL = "global"
PER_LAYER = "per_layer"


def _entries(net: Network, layer_indices=None):
    """(|value|, layer, row, col, value) for every parameter, bias col last."""
    out = []
    for k, layer in enumerate(net.layers, start=1):
        if layer_indices is not None and k not in layer_indices:
            continue
        w, b = layer.weights, layer.biases
        for i in range(layer.out_dim):
            for j in range(layer.in_dim):
                out.append((abs(w[i, j]), k, i, j))
            out.append((abs(b[i]), k, i, layer.in_dim))
    return out


def _zero_entries(net: Network, chosen) -> Network:
    new_w = [l.weights.copy() for l in net.layers]
    new_b = [l.biases.copy() for l in net.layers]
    for _, k, i, j in chosen:
        if j == net.layers[k - 1].in_dim:
            new_b[k - 1][i] = 0.0
        else:
            new_w[k - 1][i, j] = 0.0
    layers = [
        (w, b, l.activation) for w, b, l in zip(new_w, new_b, net.layers)
    ]
    return Network(layers)


def mbp_prune(net: Network, rate: float, scope: str = GLOBAL) -> Network:
    """Zero the ``rate`` fraction of smallest-|v| weights and biases.

    ``global`` pools every layer together; ``per_layer`` prunes each layer's
    pool independently.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must be in [0, 1], got {rate}")
    if scope not in (GLOBAL, PER_LAYER):
        raise ValueError(f"unknown scope {scope!r}")
    chosen = []
    if scope == GLOBAL:
        pool = sorted(_entries(net))
        k = int(np.floor(rate * len(pool) + 1e-12))
        chosen = pool[:k]
    else:
        for layer_index in range(1, net.num_layers + 1):
            pool = sorted(_entries(net, {layer_index}))
            k = int(np.floor(rate * len(pool) + 1e-12))
            chosen.extend(pool[:k])
    return _zero_entries(net, chosen)


def mbp_prune_to_sparsity(net: Network, target_nnz: int) -> Network:
    """Global magnitude pruning until at most ``target_nnz`` nonzeros remain."""
    current = count_nonzeros(net).total
    if target_nnz > current:
        raise ValueError(
            f"target_nnz {target_nnz} exceeds current nonzero count {current}"
        )
    pool = sorted(e for e in _entries(net) if e[0] != 0.0)
    return _zero_entries(net, pool[: current - target_nnz])
