"""Text serialization for networks.

Format (UTF-8, one token stream per line):

    vnn-model v1
    layers <N>
    layer <k> <activation> <out_dim> <in_dim>
    w <in_dim reals>          # one line per weight row, row-major
    ...
    b <out_dim reals>

Reals are written with ``repr`` so a save/load round-trip is bit-exact.
"""

from __future__ import annotations

import math
import os

from .errors import ModelFormatError, NetworkValidationError
from .network import Layer, Network

HEADER = "vnn-model v1"


def save(net: Network, path: str) -> None:
    """Write ``net`` to ``path`` atomically (temp file + rename)."""
    lines = [HEADER, f"layers {net.num_layers}"]
    for k, layer in enumerate(net.layers, start=1):
        lines.append(f"layer {k} {layer.activation} {layer.out_dim} {layer.in_dim}")
        for row in layer.weights:
            lines.append("w " + " ".join(repr(float(v)) for v in row))
        lines.append("b " + " ".join(repr(float(v)) for v in layer.biases))
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


class _Reader:
    def __init__(self, path: str):
        with open(path, "r", encoding="utf-8") as fh:
            self.lines = fh.read().splitlines()
        self.pos = 0
        self.path = path

    def next(self, what: str) -> tuple[int, list[str]]:
        while self.pos < len(self.lines):
            lineno = self.pos + 1
            raw = self.lines[self.pos].strip()
            self.pos += 1
            if raw:
                return lineno, raw.split()
            continue
        raise ModelFormatError(f"{self.path}: unexpected end of file, expected {what}")

    def fail(self, lineno: int, msg: str):
        raise ModelFormatError(f"{self.path}:{lineno}: {msg}")


def _parse_real(reader: _Reader, lineno: int, token: str) -> float:
    try:
        v = float(token)
    except ValueError:
        reader.fail(lineno, f"bad real value {token!r}")
    if not math.isfinite(v):
        reader.fail(lineno, f"non-finite value {token!r}")
    return v


def _parse_int(reader: _Reader, lineno: int, token: str, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        reader.fail(lineno, f"bad {what} {token!r}")


def load(path: str) -> Network:
    """Parse a model file; raises :class:`ModelFormatError` with line context
    on malformed input and :class:`NetworkValidationError` on shape-chain or
    activation violations."""
    reader = _Reader(path)
    lineno, toks = reader.next("header")
    if " ".join(toks) != HEADER:
        reader.fail(lineno, f"expected header {HEADER!r}")
    lineno, toks = reader.next("layer count")
    if len(toks) != 2 or toks[0] != "layers":
        reader.fail(lineno, "expected 'layers <N>'")
    n_layers = _parse_int(reader, lineno, toks[1], "layer count")
    if n_layers < 1:
        reader.fail(lineno, f"layer count must be >= 1, got {n_layers}")

    layers = []
    for k in range(1, n_layers + 1):
        lineno, toks = reader.next(f"layer {k} header")
        if len(toks) != 5 or toks[0] != "layer":
            reader.fail(lineno, "expected 'layer <k> <activation> <out> <in>'")
        if _parse_int(reader, lineno, toks[1], "layer index") != k:
            reader.fail(lineno, f"expected layer index {k}, got {toks[1]}")
        activation = toks[2]
        out_dim = _parse_int(reader, lineno, toks[3], "out_dim")
        in_dim = _parse_int(reader, lineno, toks[4], "in_dim")
        if out_dim < 1 or in_dim < 1:
            reader.fail(lineno, "dimensions must be positive")
        rows = []
        for r in range(out_dim):
            lineno, toks = reader.next(f"weight row {r} of layer {k}")
            if toks[0] != "w":
                reader.fail(lineno, f"expected weight row, got {toks[0]!r}")
            if len(toks) - 1 != in_dim:
                reader.fail(lineno, f"expected {in_dim} weights, got {len(toks) - 1}")
            rows.append([_parse_real(reader, lineno, t) for t in toks[1:]])
        lineno, toks = reader.next(f"bias row of layer {k}")
        if toks[0] != "b":
            reader.fail(lineno, f"expected bias row, got {toks[0]!r}")
        if len(toks) - 1 != out_dim:
            reader.fail(lineno, f"expected {out_dim} biases, got {len(toks) - 1}")
        biases = [_parse_real(reader, lineno, t) for t in toks[1:]]
        try:
            layers.append(Layer(rows, biases, activation))
        except NetworkValidationError as exc:
            reader.fail(lineno, str(exc))

    while reader.pos < len(reader.lines):
        if reader.lines[reader.pos].strip():
            reader.fail(reader.pos + 1, "trailing content after last layer")
        reader.pos += 1
    return Network(layers)
