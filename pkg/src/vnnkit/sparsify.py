"""Layer-wise constrained L1 sparsification of ReLU networks.

For a target layer l, one linear program minimizes the L1 mass of that
layer's weights and biases subject to, for every retained validation sample:

* every neuron of layer l keeps its original activation state (sign
  constraints on the new pre-activations);
* every downstream neuron, re-expressed over the perturbed values, keeps its
  original state as well, which keeps the whole network inside the linear
  region the sample originally occupied;
* the new layer-l values stay inside a per-neuron deviation box around the
  original values (additive or multiplicative epsilon);
* the logits keep the sample's class with a configurable margin.

Activation states are frozen to the original network's pattern per sample;
that makes the program linear and means a feasible solution preserves the
pattern exactly. Layers are processed in ascending order, each committed
before the next program is built, so later programs see the already-edited
prefix. The identity solution (keeping the layer) satisfies every structural
constraint, so infeasibility only arises from deviation-box drift across
layers or numerical tolerance; it downgrades to "keep the layer unchanged"
with a warning rather than aborting the run.

After the solve, entries below ``zero_threshold`` snap to exact zeros; if
the snapped layer fails a full constraint re-check at 1e-6 the snaps are
rolled back one value at a time, smallest magnitude first, until it passes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import lp as lpmod
from .datasets import LabeledSample
from .errors import ConfigError, DataFormatError, InternalConsistencyError
from .network import (
    IDENTITY,
    Network,
    forward,
    forward_with_preactivations,
    margin,
)

ADDITIVE = "additive"
MULTIPLICATIVE = "multiplicative"

RECHECK_TOL = 1e-6
# Sign constraints carry this margin so optimal vertices never sit exactly on
# the activation boundary, where float rounding could flip a pattern bit.
SIGN_FLOOR = 1e-9


@dataclass(frozen=True)
class SparsifyConfig:
    epsilon: float = 0.0
    epsilon_mode: str = ADDITIVE
    margin: float = 0.0
    zero_threshold: float = 1e-6
    layers: tuple[int, ...] | None = None  # 1-based; None means every layer

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigError("epsilon must be >= 0")
        if self.margin < 0:
            raise ConfigError("margin must be >= 0")
        if self.zero_threshold < 0:
            raise ConfigError("zero_threshold must be >= 0")
        if self.epsilon_mode not in (ADDITIVE, MULTIPLICATIVE):
            raise ConfigError(f"unknown epsilon_mode {self.epsilon_mode!r}")
        if self.layers is not None:
            object.__setattr__(self, "layers", tuple(sorted(set(self.layers))))

    def value_box(self, center: float) -> tuple[float, float]:
        """Allowed interval for one optimized value around its original."""
        if self.epsilon_mode == ADDITIVE:
            return center - self.epsilon, center + self.epsilon
        lo = (1.0 - self.epsilon) * center
        hi = (1.0 + self.epsilon) * center
        return min(lo, hi), max(lo, hi)


@dataclass
class LayerLpVariables:
    """Index map for one layer program's variables."""

    layer_index: int
    n_in: int
    n_out: int
    num_samples: int
    value_widths: tuple[int, ...]  # widths of layers l..N
    num_vars: int = field(init=False)

    def __post_init__(self):
        self.n_dec = self.n_out * (self.n_in + 1)
        self._value_offsets = np.concatenate(
            ([0], np.cumsum(self.value_widths))
        )
        self.block = int(self._value_offsets[-1])
        self.value_base = 2 * self.n_dec
        self.num_vars = self.value_base + self.num_samples * self.block

    def weight(self, i: int, j: int) -> int:
        return i * self.n_in + j

    def bias(self, i: int) -> int:
        return self.n_out * self.n_in + i

    def aux(self, d: int) -> int:
        return self.n_dec + d

    def value(self, sample: int, m: int, j: int) -> int:
        """Variable for x~(m)_j of one sample; m ranges over l..N."""
        return (
            self.value_base
            + sample * self.block
            + int(self._value_offsets[m - self.layer_index])
            + j
        )


@dataclass
class _SampleCache:
    input_to_layer: np.ndarray          # committed-prefix values feeding layer l
    states: list[np.ndarray]            # original pattern per hidden layer
    box_center: np.ndarray              # original post-activation of layer l
    label: int


@dataclass
class LayerSolution:
    layer_index: int
    weights: np.ndarray
    biases: np.ndarray
    objective: float                    # L1 mass reported by the program
    cached_values: np.ndarray           # x~(l) per retained sample
    fallback: bool = False              # layer kept unchanged (infeasible LP)
    lp_num_vars: int = 0
    lp_num_constraints: int = 0
    iterations: int = 0


def _collect_caches(net: Network, prefix: Network, layer_index: int,
                    val: list[LabeledSample]) -> list[_SampleCache]:
    caches = []
    for s in val:
        if not 0 <= s.label < net.out_dim:
            raise DataFormatError(
                f"label {s.label} out of range for {net.out_dim} classes"
            )
        orig_vals, orig_pres = forward_with_preactivations(net, s.input)
        states = [z > 0.0 for z in orig_pres[:-1]]
        cur_vals = forward(prefix, s.input)
        caches.append(
            _SampleCache(cur_vals[layer_index - 1], states,
                         orig_vals[layer_index], s.label)
        )
    return caches


def build_layer_lp(net: Network, layer_index: int, prefix: Network,
                   val: list[LabeledSample], cfg: SparsifyConfig,
                   ) -> tuple[lpmod.LinearProgram, LayerLpVariables]:
    """Assemble the layer program; see the module docstring for its shape.

    ``net`` supplies frozen activation states and deviation-box centers;
    ``prefix`` supplies the committed values feeding layer ``layer_index``.
    Variables: the layer's weights and biases, one L1 auxiliary per decision
    variable (objective = their sum, tied by t >= v, t >= -v rows), and per
    sample the values of layer l and of every downstream layer.
    """
    if not val:
        raise ConfigError("validation set is empty")
    n_layers = net.num_layers
    if not 1 <= layer_index <= n_layers:
        raise ConfigError(f"layer index {layer_index} out of range 1..{n_layers}")
    caches = _collect_caches(net, prefix, layer_index, val)

    layer = prefix.layers[layer_index - 1]
    n_in, n_out = layer.in_dim, layer.out_dim
    is_output = layer.activation == IDENTITY
    value_widths = tuple(l.out_dim for l in prefix.layers[layer_index - 1:])
    vmap = LayerLpVariables(layer_index, n_in, n_out, len(val), value_widths)
    problem = lpmod.LinearProgram(vmap.num_vars)
    problem.set_objective({vmap.aux(d): 1.0 for d in range(vmap.n_dec)})

    for d in range(vmap.n_dec):
        problem.add_constraint({vmap.aux(d): 1.0, d: -1.0}, ">=", 0.0)
        problem.add_constraint({vmap.aux(d): 1.0, d: 1.0}, ">=", 0.0)

    for s, cache in enumerate(caches):
        a = cache.input_to_layer
        # Target layer: sign constraints against the frozen state, value
        # variables tied to the new affine expression, deviation box as
        # bounds on those variables.
        for i in range(n_out):
            var = vmap.value(s, layer_index, i)
            active = is_output or bool(cache.states[layer_index - 1][i])
            if active:
                coeffs = {var: 1.0, vmap.bias(i): -1.0}
                for j in range(n_in):
                    if a[j] != 0.0:
                        coeffs[vmap.weight(i, j)] = -a[j]
                problem.add_constraint(coeffs, "=", 0.0)
                lo, hi = cfg.value_box(float(cache.box_center[i]))
                if not is_output:
                    # strictly positive, but never past the box top
                    lo = max(lo, min(SIGN_FLOOR, hi))
                problem.set_bounds(var, lo, hi)
            else:
                coeffs = {vmap.bias(i): 1.0}
                for j in range(n_in):
                    if a[j] != 0.0:
                        coeffs[vmap.weight(i, j)] = a[j]
                problem.add_constraint(coeffs, "<=", -SIGN_FLOOR)
                problem.set_bounds(var, 0.0, 0.0)

        # Downstream layers ride on the original weights; states stay frozen.
        for m in range(layer_index + 1, n_layers + 1):
            down = prefix.layers[m - 1]
            w, b = down.weights, down.biases
            last = m == n_layers
            for j in range(down.out_dim):
                var = vmap.value(s, m, j)
                coeffs = {
                    vmap.value(s, m - 1, k): float(-w[j, k])
                    for k in range(down.in_dim)
                    if w[j, k] != 0.0
                }
                if last or bool(cache.states[m - 1][j]):
                    coeffs[var] = 1.0
                    problem.add_constraint(coeffs, "=", float(b[j]))
                    if not last:
                        problem.set_bounds(var, SIGN_FLOOR, np.inf)
                else:
                    neg = {k: -v for k, v in coeffs.items()}
                    problem.add_constraint(neg, "<=", float(-b[j]) - SIGN_FLOOR)
                    problem.set_bounds(var, 0.0, 0.0)

        label = cache.label
        for i in range(net.out_dim):
            if i != label:
                problem.add_constraint(
                    {vmap.value(s, n_layers, label): 1.0,
                     vmap.value(s, n_layers, i): -1.0},
                    ">=", cfg.margin,
                )
    return problem, vmap


def _frozen_forward(prefix: Network, layer_index: int, W: np.ndarray,
                    b: np.ndarray, cache: _SampleCache):
    """Values of layers l..N with layer l replaced by (W, b).

    Returns (values, pattern_ok): values[0] is x~(l), values[-1] the logits;
    pattern_ok reports whether every hidden pre-activation keeps the
    sample's original state under exact pattern semantics (active means
    strictly positive). When pattern_ok holds, the masked propagation used
    here coincides with a plain forward pass of the edited network.
    """
    n_layers = prefix.num_layers
    z = W @ cache.input_to_layer + b
    pattern_ok = True
    values = []
    for m in range(layer_index, n_layers + 1):
        if m > layer_index:
            down = prefix.layers[m - 1]
            z = down.weights @ values[-1] + down.biases
        if m == n_layers:
            values.append(z)
            continue
        state = cache.states[m - 1]
        if not (np.all(z[state] > 0.0) and np.all(z[~state] <= 0.0)):
            pattern_ok = False
        values.append(np.where(state, np.maximum(z, 0.0), 0.0))
    return values, pattern_ok


def _candidate_feasible(prefix: Network, layer_index: int, W, b,
                        caches: list[_SampleCache], cfg: SparsifyConfig,
                        tol: float, check_box: bool = True) -> bool:
    n_layers = prefix.num_layers
    for cache in caches:
        values, pattern_ok = _frozen_forward(prefix, layer_index, W, b, cache)
        if not pattern_ok:
            return False
        if check_box:
            x_l = values[0]
            for i, center in enumerate(cache.box_center):
                lo, hi = cfg.value_box(float(center))
                if layer_index < n_layers:
                    lo = max(lo, 0.0)
                if not lo - tol <= x_l[i] <= hi + tol:
                    return False
        logits = values[-1]
        if margin(logits, cache.label) < cfg.margin - tol:
            return False
    return True


def _snap_with_rollback(prefix: Network, layer_index: int, W, b,
                        caches, cfg) -> tuple[np.ndarray, np.ndarray]:
    """Zero out sub-threshold entries, then restore (smallest first) until
    the full constraint set re-checks feasible at 1e-6."""
    flat = np.concatenate([W.ravel(), b.ravel()])
    small = np.flatnonzero((np.abs(flat) < cfg.zero_threshold) & (flat != 0.0))
    if small.size == 0:
        return W, b
    snapped = flat.copy()
    snapped[small] = 0.0

    def unpack(v):
        return v[: W.size].reshape(W.shape), v[W.size:]

    Ws, bs = unpack(snapped)
    if _candidate_feasible(prefix, layer_index, Ws, bs, caches, cfg, RECHECK_TOL):
        return Ws, bs
    order = small[np.argsort(np.abs(flat[small]), kind="stable")]
    for idx in order:
        snapped[idx] = flat[idx]
        Ws, bs = unpack(snapped)
        if _candidate_feasible(prefix, layer_index, Ws, bs, caches, cfg, RECHECK_TOL):
            return Ws, bs
    return unpack(flat)


def sparsify_layer(net: Network, layer_index: int, prefix: Network,
                   val: list[LabeledSample], cfg: SparsifyConfig) -> LayerSolution:
    """Solve the layer program and return the (snapped) replacement layer.

    An infeasible program keeps the layer unchanged and flags the solution;
    the kept layer is still re-checked against the sign and margin
    constraints, which it must satisfy by construction of the previous
    commits, so a failure there raises :class:`InternalConsistencyError`.
    """
    problem, vmap = build_layer_lp(net, layer_index, prefix, val, cfg)
    caches = _collect_caches(net, prefix, layer_index, val)
    layer = prefix.layers[layer_index - 1]
    solution = lpmod.solve(problem, tol=1e-7)

    if solution.status != lpmod.OPTIMAL:
        if solution.status == lpmod.UNBOUNDED:
            raise InternalConsistencyError(
                "layer program reported unbounded; its objective is a sum of "
                "absolute values and cannot decrease without bound"
            )
        W, b = layer.weights, layer.biases
        if not _candidate_feasible(prefix, layer_index, W, b, caches, cfg,
                                   RECHECK_TOL, check_box=False):
            raise InternalConsistencyError(
                f"layer {layer_index}: program infeasible and the current "
                "layer violates its own sign/margin constraints"
            )
        cached = np.array([
            _frozen_forward(prefix, layer_index, W, b, c)[0][0] for c in caches
        ])
        return LayerSolution(
            layer_index, W.copy(), b.copy(),
            float(np.abs(W).sum() + np.abs(b).sum()), cached, fallback=True,
            lp_num_vars=problem.num_vars,
            lp_num_constraints=problem.num_constraints,
            iterations=solution.iterations,
        )

    W = np.array([
        [solution.values[vmap.weight(i, j)] for j in range(vmap.n_in)]
        for i in range(vmap.n_out)
    ])
    b = np.array([solution.values[vmap.bias(i)] for i in range(vmap.n_out)])
    if cfg.zero_threshold > 0:
        W, b = _snap_with_rollback(prefix, layer_index, W, b, caches, cfg)
    cached = np.array([
        _frozen_forward(prefix, layer_index, W, b, c)[0][0] for c in caches
    ])
    return LayerSolution(
        layer_index, W, b, float(solution.objective), cached,
        lp_num_vars=problem.num_vars,
        lp_num_constraints=problem.num_constraints,
        iterations=solution.iterations,
    )


@dataclass
class LayerReport:
    layer: int
    l1_before: float
    l1_after: float
    nnz_before: int
    nnz_after: int
    lp_vars: int
    lp_constraints: int
    seconds: float
    fallback: bool = False


@dataclass
class SparsifyReport:
    layers: list[LayerReport]
    excluded: list[tuple[int, str]]     # (sample position, reason)
    retained: int

    CSV_HEADER = "layer,l1_before,l1_after,nnz_before,nnz_after,lp_vars,lp_constraints,seconds"

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for r in self.layers:
            lines.append(
                f"{r.layer},{r.l1_before!r},{r.l1_after!r},{r.nnz_before},"
                f"{r.nnz_after},{r.lp_vars},{r.lp_constraints},{r.seconds:.6f}"
            )
        return "\n".join(lines) + "\n"

    @property
    def warnings(self) -> list[str]:
        notes = [f"sample {i} excluded: {why}" for i, why in self.excluded]
        notes += [
            f"layer {r.layer}: program infeasible, layer kept unchanged"
            for r in self.layers if r.fallback
        ]
        return notes


def retained_samples(net: Network, val: list[LabeledSample],
                     cfg: SparsifyConfig) -> tuple[list[LabeledSample],
                                                   list[tuple[int, str]]]:
    """Samples the program can certify: correctly classified with a logit
    margin of at least the configured one (the identity solution must be
    feasible, which needs the original margin to clear M)."""
    kept, dropped = [], []
    for pos, s in enumerate(val):
        logits = forward(net, s.input)[-1]
        pred = int(np.argmax(logits))
        gap = margin(logits, s.label)
        if pred != s.label:
            dropped.append((pos, f"misclassified as {pred}"))
        elif gap < cfg.margin:
            dropped.append((pos, f"margin {gap:.6g} below required {cfg.margin:g}"))
        else:
            kept.append(s)
    return kept, dropped


def sparsify_network(net: Network, val: list[LabeledSample],
                     cfg: SparsifyConfig) -> tuple[Network, SparsifyReport]:
    """Run the layer program over ``cfg.layers`` in ascending order.

    Each solution is committed before the next program is built. Validation
    samples the constraints cannot hold for (misclassified, or short of the
    margin) are dropped up front and listed in the report.
    """
    if not val:
        raise ConfigError("validation set is empty")
    kept, dropped = retained_samples(net, val, cfg)
    if cfg.layers is not None:
        bad = [l for l in cfg.layers if not 1 <= l <= net.num_layers]
        if bad:
            raise ConfigError(f"layer indices {bad} out of range 1..{net.num_layers}")
        layer_list: tuple[int, ...] = cfg.layers
    else:
        layer_list = tuple(range(1, net.num_layers + 1))
    if layer_list and not kept:
        raise ConfigError(
            "no usable validation samples: every sample is misclassified or "
            "below the required margin"
        )

    current = net
    rows: list[LayerReport] = []
    for l in layer_list:
        start = time.perf_counter()
        before = current.layers[l - 1]
        l1_before = float(np.abs(before.weights).sum() + np.abs(before.biases).sum())
        nnz_before = int(np.count_nonzero(before.weights) + np.count_nonzero(before.biases))
        sol = sparsify_layer(net, l, current, kept, cfg)
        current = current.with_layer(l, sol.weights, sol.biases)
        after = current.layers[l - 1]
        rows.append(LayerReport(
            layer=l,
            l1_before=l1_before,
            l1_after=float(np.abs(after.weights).sum() + np.abs(after.biases).sum()),
            nnz_before=nnz_before,
            nnz_after=int(np.count_nonzero(after.weights) + np.count_nonzero(after.biases)),
            lp_vars=sol.lp_num_vars,
            lp_constraints=sol.lp_num_constraints,
            seconds=time.perf_counter() - start,
            fallback=sol.fallback,
        ))
    return current, SparsifyReport(rows, dropped, retained=len(kept))
