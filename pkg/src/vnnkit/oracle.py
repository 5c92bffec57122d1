"""Exact robustness decision for tiny networks, plus a sampling falsifier.

``exact_verify`` enumerates hidden activation patterns inside the input box.
Interval prefiltering pins every stably-active/inactive neuron, so only
unstable neurons branch. Fixing a pattern makes the network affine on a
polytope; one LP per (pattern, adversarial class) then asks whether some
input in the box, inside that polytope, pushes the adversarial logit above
the label's. Any feasible point is re-validated with a concrete forward pass
before being reported. If every LP is infeasible the property is robust —
this is a decision procedure, not an over-approximation.

Patterns are visited in order of Hamming distance from the center input's
own pattern (then lexicographically), so counterexample reporting is
deterministic: lowest pattern index wins.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import lp as lpmod
from .network import Network, forward, forward_batch
from .verify import RobustnessProperty, interval_bounds

ROBUST = "robust"
NOT_ROBUST = "not_robust"
RESOURCE_EXCEEDED = "resource_exceeded"

# Strictness device: "misclassified" means logit_i - logit_label >= this.
MARGIN_STRICT = 1e-9


@dataclass(frozen=True)
class OracleLimits:
    max_neurons: int = 24
    max_patterns: int = 4096


@dataclass
class OracleResult:
    status: str
    counterexample: np.ndarray | None = None
    patterns_checked: int = 0
    lps_solved: int = 0

    def __bool__(self) -> bool:  # truthy when a decision was reached
        return self.status != RESOURCE_EXCEEDED


def _pattern_order(n_unstable: int, max_patterns: int):
    """Flip masks over unstable neurons: fewest flips from the center first."""
    indices = range(n_unstable)
    for n_flips in range(n_unstable + 1):
        for combo in itertools.combinations(indices, n_flips):
            mask = np.zeros(n_unstable, dtype=bool)
            mask[list(combo)] = True
            yield mask


def exact_verify(net: Network, prop: RobustnessProperty,
                 limits: OracleLimits = OracleLimits(),
                 target_class: int | None = None) -> OracleResult:
    """Decide robustness exactly; see the module docstring.

    With ``target_class`` the decision only covers misclassification into
    that class, which is how per-state tallies (sample x adversarial class)
    are produced.
    """
    total_hidden = sum(l.out_dim for l in net.layers[:-1])
    if total_hidden > limits.max_neurons:
        return OracleResult(RESOURCE_EXCEEDED)

    bounds = interval_bounds(net, prop)
    lb0, ub0 = prop.input_box()
    n_hidden_layers = len(net.layers) - 1

    # Stable neurons keep their interval-certified state; the rest branch.
    base_state: list[np.ndarray] = []
    unstable: list[tuple[int, int]] = []
    center_vals = forward(net, prop.center)
    for k in range(n_hidden_layers):
        pre_l, pre_u = bounds[k + 1].pre_lower, bounds[k + 1].pre_upper
        state = pre_l >= 0.0  # stably-active; stably-inactive is pre_u <= 0
        for i in np.flatnonzero((pre_l < 0.0) & (pre_u > 0.0)):
            unstable.append((k, int(i)))
        base_state.append(state)
    if unstable and 2 ** len(unstable) > limits.max_patterns:
        return OracleResult(RESOURCE_EXCEEDED)

    # The center's own states seed the enumeration.
    center_unstable = np.array(
        [center_vals[k + 1][i] > 0.0 for k, i in unstable], dtype=bool
    )

    label = prop.label
    if target_class is None:
        adversaries = [c for c in range(net.out_dim) if c != label]
    else:
        adversaries = [target_class]
    dim = net.in_dim
    patterns_checked = 0
    lps_solved = 0

    for flip in _pattern_order(len(unstable), limits.max_patterns):
        states = [s.copy() for s in base_state]
        assignment = center_unstable ^ flip
        for (k, i), on in zip(unstable, assignment):
            states[k][i] = on
        patterns_checked += 1

        # Affine composition under this pattern: pre(k) = A_k x + c_k.
        A = net.layers[0].weights
        c = net.layers[0].biases
        sign_rows: list[tuple[np.ndarray, float, bool]] = []
        for k in range(n_hidden_layers):
            mask = states[k].astype(float)
            for idx, (kk, i) in enumerate(unstable):
                if kk == k:
                    sign_rows.append((A[i], float(c[i]), bool(assignment[idx])))
            A_post = mask[:, None] * A
            c_post = mask * c
            W_next = net.layers[k + 1].weights
            b_next = net.layers[k + 1].biases
            A = W_next @ A_post
            c = W_next @ c_post + b_next

        for adv in adversaries:
            problem = lpmod.LinearProgram(dim)
            diff_row = A[adv] - A[label]
            diff_const = float(c[adv] - c[label])
            problem.set_objective({j: -float(diff_row[j]) for j in range(dim)})
            for j in range(dim):
                problem.set_bounds(j, float(lb0[j]), float(ub0[j]))
            for row, const, on in sign_rows:
                coeffs = {j: float(row[j]) for j in range(dim)}
                if on:
                    problem.add_constraint(coeffs, ">=", -const)
                else:
                    problem.add_constraint(coeffs, "<=", -const)
            problem.add_constraint(
                {j: float(diff_row[j]) for j in range(dim)},
                ">=", MARGIN_STRICT - diff_const,
            )
            lps_solved += 1
            solution = lpmod.solve(problem, tol=1e-9)
            if solution.status != lpmod.OPTIMAL:
                continue
            candidate = np.clip(solution.values, lb0, ub0)
            if int(np.argmax(forward(net, candidate)[-1])) != label:
                return OracleResult(NOT_ROBUST, candidate, patterns_checked, lps_solved)
    return OracleResult(ROBUST, None, patterns_checked, lps_solved)


def attack(net: Network, prop: RobustnessProperty,
           n_samples: int = 10_000, seed: int = 0) -> np.ndarray | None:
    """Cheap falsifier: center, box corners (dim <= 20), then uniform samples.

    Returns the first input in the box whose argmax differs from the label,
    or None. Deterministic per seed.
    """
    lb, ub = prop.input_box()
    label = prop.label

    if int(np.argmax(forward(net, prop.center)[-1])) != label:
        return prop.center.copy()

    dim = net.in_dim
    if prop.delta > 0 and dim <= 20:
        corners = np.array(list(itertools.product(*zip(lb, ub))))
        preds = forward_batch(net, corners).argmax(axis=1)
        bad = np.flatnonzero(preds != label)
        if bad.size:
            return corners[bad[0]]

    if prop.delta > 0 and n_samples > 0:
        rng = np.random.default_rng(seed)
        points = rng.uniform(lb, ub, size=(n_samples, dim))
        preds = forward_batch(net, points).argmax(axis=1)
        bad = np.flatnonzero(preds != label)
        if bad.size:
            return points[bad[0]]
    return None
