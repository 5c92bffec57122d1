"""Linear programs and a self-contained two-phase primal simplex solver.

The solver works on a dense tableau over the standard-form conversion
(min c'x, Ax = b, x >= 0): finite lower bounds are shifted out, variables
with only an upper bound are mirrored, free variables are split into
positive/negative parts, and finite ranges add an explicit upper-bound row.
Entering variables are picked by Dantzig pricing; after a run of degenerate
pivots the solver switches to Bland's rule, which cannot cycle, and switches
back once the objective moves again. Ratio-test ties always go to the
smallest basic-variable index, so the pivot sequence (and the returned
vertex) is deterministic.

Before standardization a presolve pass substitutes fixed variables
(lo == hi), folds singleton rows into bounds, and recognizes the
absolute-value gadget {t >= v, t >= -v} emitted by L1 objectives. Each
gadget pair (t, v) maps exactly onto the nonnegative split v = v+ - v- that
standardization performs anyway, with t = v+ + v-; feasible sets are in
bijection, so large L1 programs shed two rows and one column per gadget
without changing the problem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InternalConsistencyError, SolverStalledError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

LE, EQ, GE = "<=", "=", ">="
_RELATIONS = (LE, EQ, GE)

_PIVOT_EPS = 1e-10
_BLAND_AFTER = 25  # degenerate pivots in a row before anti-cycling kicks in


@dataclass
class Constraint:
    indices: np.ndarray
    values: np.ndarray
    relation: str
    rhs: float


@dataclass
class LpSolution:
    status: str
    values: np.ndarray | None = None
    objective: float | None = None
    iterations: int = 0


class LinearProgram:
    """min objective . x subject to row constraints and variable bounds.

    Variables default to free; call :meth:`set_bounds` to restrict them.
    """

    def __init__(self, num_vars: int):
        if num_vars < 1:
            raise ValueError("num_vars must be >= 1")
        self.num_vars = num_vars
        self.objective = np.zeros(num_vars)
        self.lower = np.full(num_vars, -np.inf)
        self.upper = np.full(num_vars, np.inf)
        self.constraints: list[Constraint] = []

    def set_objective(self, coeffs: dict[int, float]) -> None:
        for i, c in coeffs.items():
            self.objective[i] = c

    def set_bounds(self, index: int, lower: float, upper: float) -> None:
        if lower > upper:
            raise ValueError(f"bounds for variable {index} cross: [{lower}, {upper}]")
        self.lower[index] = lower
        self.upper[index] = upper

    def add_constraint(self, coeffs: dict[int, float], relation: str, rhs: float) -> None:
        if relation == "==":
            relation = EQ
        if relation not in _RELATIONS:
            raise ValueError(f"unknown relation {relation!r}")
        if not np.isfinite(rhs):
            raise ValueError("constraint rhs must be finite")
        idx = np.fromiter(coeffs.keys(), dtype=int, count=len(coeffs))
        val = np.fromiter(coeffs.values(), dtype=float, count=len(coeffs))
        if idx.size and (idx.min() < 0 or idx.max() >= self.num_vars):
            raise ValueError("constraint references unknown variable index")
        keep = val != 0.0
        idx, val = idx[keep], val[keep]
        order = np.argsort(idx, kind="stable")
        self.constraints.append(Constraint(idx[order], val[order], relation, float(rhs)))

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)


def dump(lp: LinearProgram) -> str:
    """Human-readable text form: objective, then one constraint per line."""

    def term(c: float, i: int) -> str:
        return f"{c:+g}*x{i}"

    lines = ["min " + (" ".join(term(c, i) for i, c in enumerate(lp.objective) if c != 0.0) or "0")]
    for con in lp.constraints:
        lhs = " ".join(term(c, i) for i, c in zip(con.indices, con.values))
        lines.append(f"{lhs or '0'} {con.relation} {con.rhs:g}")
    for i in range(lp.num_vars):
        lo, hi = lp.lower[i], lp.upper[i]
        if np.isfinite(lo) or np.isfinite(hi):
            lines.append(f"{lo:g} <= x{i} <= {hi:g}")
    return "\n".join(lines)


def check_feasible(lp: LinearProgram, x: np.ndarray, tol: float) -> float:
    """Largest violation of any bound or constraint at ``x`` (0 when inside)."""
    worst = 0.0
    finite_lo = np.isfinite(lp.lower)
    finite_hi = np.isfinite(lp.upper)
    if finite_lo.any():
        worst = max(worst, float(np.max(lp.lower[finite_lo] - x[finite_lo], initial=0.0)))
    if finite_hi.any():
        worst = max(worst, float(np.max(x[finite_hi] - lp.upper[finite_hi], initial=0.0)))
    for con in lp.constraints:
        lhs = float(con.values @ x[con.indices])
        if con.relation == LE:
            worst = max(worst, lhs - con.rhs)
        elif con.relation == GE:
            worst = max(worst, con.rhs - lhs)
        else:
            worst = max(worst, abs(lhs - con.rhs))
    return worst


# ---------------------------------------------------------------------------
# presolve

_Row = tuple[np.ndarray, np.ndarray, str, float]


@dataclass
class _Reduced:
    keep: np.ndarray                       # original indices of surviving vars
    lower: np.ndarray                      # bounds over surviving vars
    upper: np.ndarray
    objective: np.ndarray
    rows: list[_Row]                       # over original indices
    fixed_values: np.ndarray               # full length, NaN where not fixed
    gadgets: list[tuple[int, int, float]]  # (t, v, cost of t); v survives
    infeasible: bool = False


def _infeasible_marker(lp: LinearProgram, fixed: np.ndarray) -> _Reduced:
    empty = np.array([], dtype=int)
    return _Reduced(empty, empty.astype(float), empty.astype(float),
                    empty.astype(float), [], fixed, [], infeasible=True)


def _presolve(lp: LinearProgram, tol: float) -> _Reduced:
    n = lp.num_vars
    lower = lp.lower.copy()
    upper = lp.upper.copy()
    rows: list[_Row] = [
        (c.indices.copy(), c.values.copy(), c.relation, c.rhs) for c in lp.constraints
    ]
    fixed = np.full(n, np.nan)

    for _ in range(n + len(rows) + 1):
        changed = False
        newly = np.flatnonzero(np.isnan(fixed) & (lower == upper))
        if newly.size:
            changed = True
            fixed[newly] = lower[newly]
            out: list[_Row] = []
            for idx, val, rel, rhs in rows:
                hit = np.isin(idx, newly)
                if hit.any():
                    rhs = rhs - float(val[hit] @ fixed[idx[hit]])
                    idx, val = idx[~hit], val[~hit]
                if idx.size == 0:
                    ok = (rhs >= -tol if rel == LE else
                          rhs <= tol if rel == GE else abs(rhs) <= tol)
                    if not ok:
                        return _infeasible_marker(lp, fixed)
                    continue
                out.append((idx, val, rel, rhs))
            rows = out
        out = []
        for idx, val, rel, rhs in rows:
            if idx.size == 1:
                changed = True
                i, a = int(idx[0]), float(val[0])
                bound = rhs / a
                if rel == EQ:
                    lower[i] = max(lower[i], bound)
                    upper[i] = min(upper[i], bound)
                elif (rel == LE) == (a > 0):
                    upper[i] = min(upper[i], bound)
                else:
                    lower[i] = max(lower[i], bound)
                if lower[i] > upper[i] + tol:
                    return _infeasible_marker(lp, fixed)
                lower[i] = min(lower[i], upper[i])
            else:
                out.append((idx, val, rel, rhs))
        rows = out
        if not changed:
            break

    # Absolute-value gadget pairs {t >= v, t >= -v} over the surviving rows.
    occurrences: dict[int, list[int]] = {}
    for r, (idx, _, _, _) in enumerate(rows):
        for i in idx:
            occurrences.setdefault(int(i), []).append(r)
    gadgets: list[tuple[int, int, float]] = []
    consumed_rows: set[int] = set()
    consumed_vars: set[int] = set()
    for t in np.flatnonzero(np.isnan(fixed)):
        t = int(t)
        locs = occurrences.get(t, [])
        if len(locs) != 2 or t in consumed_vars:
            continue
        if not (upper[t] == np.inf and lower[t] <= 0.0):
            continue
        legs = []
        for r in locs:
            idx, val, rel, rhs = rows[r]
            if r in consumed_rows or idx.size != 2 or rhs != 0.0 or rel != GE:
                legs = []
                break
            a_t = float(val[idx == t][0])
            v = int(idx[idx != t][0])
            a_v = float(val[idx != t][0])
            if a_t <= 0.0 or abs(a_v) != a_t:
                legs = []
                break
            legs.append((r, v, a_v > 0))
        if len(legs) != 2:
            continue
        (r1, v1, plus1), (r2, v2, plus2) = legs
        if v1 != v2 or plus1 == plus2 or v1 == t or v1 in consumed_vars:
            continue
        if not (lower[v1] == -np.inf and upper[v1] == np.inf):
            continue
        gadgets.append((t, v1, float(lp.objective[t])))
        consumed_rows.update((r1, r2))
        consumed_vars.update((t, v1))

    rows = [row for r, row in enumerate(rows) if r not in consumed_rows]
    gadget_ts = {t for t, _, _ in gadgets}
    keep = np.array(
        [i for i in np.flatnonzero(np.isnan(fixed)) if int(i) not in gadget_ts],
        dtype=int,
    )
    return _Reduced(keep, lower[keep], upper[keep], lp.objective[keep],
                    rows, fixed, gadgets)


# ---------------------------------------------------------------------------
# tableau simplex

_SHIFT, _MIRROR, _SPLIT, _DEAD = "shift", "mirror", "split", "dead"


class _Tableau:
    """Dense tableau with phase-1 and phase-2 cost rows kept in lockstep."""

    def __init__(self, A: np.ndarray, b: np.ndarray, c2: np.ndarray,
                 basis: list[int], art_start: int):
        self.m, self.n = A.shape
        self.art_start = art_start
        self.T = np.zeros((self.m + 2, self.n + 1))
        self.T[: self.m, : self.n] = A
        self.T[: self.m, self.n] = b
        self.T[self.m, art_start : self.n] = 1.0
        for r, j in enumerate(basis):
            if j >= art_start:
                self.T[self.m] -= self.T[r]
        self.T[self.m + 1, : self.n] = c2  # initial basic columns cost zero
        self.basis = list(basis)
        self.iterations = 0

    def pivot(self, row: int, col: int) -> None:
        T = self.T
        T[row] = T[row] / T[row, col]
        column = T[:, col].copy()
        column[row] = 0.0
        T -= np.outer(column, T[row])
        T[:, col] = 0.0
        T[row, col] = 1.0
        self.basis[row] = col

    def choose_leaving(self, col: int) -> int:
        a = self.T[: self.m, col]
        rhs = self.T[: self.m, self.n]
        eligible = a > _PIVOT_EPS
        if not eligible.any():
            return -1
        ratios = np.full(self.m, np.inf)
        ratios[eligible] = rhs[eligible] / a[eligible]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-12)
        return int(min(ties, key=lambda r: self.basis[r]))

    def drop_rows(self, rows: list[int]) -> None:
        keep = [r for r in range(self.m) if r not in rows]
        self.T = self.T[keep + [self.m, self.m + 1]]
        self.basis = [self.basis[r] for r in keep]
        self.m = len(keep)


def _simplex_loop(tab: _Tableau, cost_row: int, active_cols: int,
                  tol: float, cap: int) -> str:
    T = tab.T
    degenerate_streak = 0
    bland = False
    while True:
        red = T[cost_row, :active_cols]
        neg = np.flatnonzero(red < -tol)
        if neg.size == 0:
            return OPTIMAL
        col = int(neg[0]) if bland else int(neg[np.argmin(red[neg])])
        row = tab.choose_leaving(col)
        if row < 0:
            # A ray with a barely-negative reduced cost is accumulated
            # tableau noise, not a real unbounded direction; retire the
            # column from pricing instead of misreporting the status.
            if red[col] > -1e-4:
                T[cost_row, col] = 0.0
                continue
            return UNBOUNDED
        tab.iterations += 1
        if tab.iterations > cap:
            raise SolverStalledError(
                f"simplex exceeded {cap} pivots (raise max_iter or check scaling)"
            )
        before = T[cost_row, tab.n]
        tab.pivot(row, col)
        if T[cost_row, tab.n] > before + 1e-12:
            degenerate_streak = 0
            bland = False
        else:
            degenerate_streak += 1
            if degenerate_streak >= _BLAND_AFTER:
                bland = True


def solve(lp: LinearProgram, tol: float = 1e-7, max_iter: int | None = None) -> LpSolution:
    """Solve with two-phase primal simplex; see the module docstring.

    Raises :class:`SolverStalledError` past the iteration cap
    (default ``50 * (num_vars + num_constraints)``).
    """
    cap = max_iter if max_iter is not None else 50 * (lp.num_vars + lp.num_constraints)
    red = _presolve(lp, tol)
    if red.infeasible:
        return LpSolution(INFEASIBLE)

    pos = {int(v): k for k, v in enumerate(red.keep)}
    nk = len(red.keep)
    gadget_cost = {v: ct for _, v, ct in red.gadgets}

    used = np.zeros(nk, dtype=bool)
    for idx, _, _, _ in red.rows:
        for i in idx:
            used[pos[int(i)]] = True
    for _, v, _ in red.gadgets:
        used[pos[v]] = True

    # Column plan: how each surviving variable maps into standard form.
    kind = np.empty(nk, dtype="U6")
    col_a = np.full(nk, -1, dtype=int)
    col_b = np.full(nk, -1, dtype=int)
    offset = np.zeros(nk)
    sign = np.ones(nk)
    costs: list[float] = []
    upper_ranges: list[tuple[int, float]] = []
    ncols = 0
    for k in range(nk):
        lo, hi, c = red.lower[k], red.upper[k], red.objective[k]
        if not used[k]:
            # Dead column: settles at whichever finite bound the cost prefers.
            kind[k] = _DEAD
            if c > 0:
                if not np.isfinite(lo):
                    return LpSolution(UNBOUNDED)
                offset[k] = lo
            elif c < 0:
                if not np.isfinite(hi):
                    return LpSolution(UNBOUNDED)
                offset[k] = hi
            else:
                offset[k] = lo if np.isfinite(lo) else (hi if np.isfinite(hi) else 0.0)
            continue
        if np.isfinite(lo):
            kind[k], col_a[k], offset[k] = _SHIFT, ncols, lo
            costs.append(c)
            ncols += 1
            if np.isfinite(hi):
                upper_ranges.append((k, hi - lo))
        elif np.isfinite(hi):
            kind[k], col_a[k], offset[k], sign[k] = _MIRROR, ncols, hi, -1.0
            costs.append(-c)
            ncols += 1
        else:
            extra = gadget_cost.get(int(red.keep[k]), 0.0)
            kind[k], col_a[k], col_b[k] = _SPLIT, ncols, ncols + 1
            costs.extend([c + extra, -c + extra])
            ncols += 2

    # Rows over standard columns, rhs normalized nonnegative.
    norm_rows: list[tuple[np.ndarray, str, float]] = []
    for idx, val, rel, rhs in red.rows:
        coeffs = np.zeros(ncols)
        shift = 0.0
        for i, a in zip(idx, val):
            k = pos[int(i)]
            if kind[k] == _SPLIT:
                coeffs[col_a[k]] += a
                coeffs[col_b[k]] -= a
            else:
                coeffs[col_a[k]] += a * sign[k]
                shift += a * offset[k]
        rhs = rhs - shift
        if rhs < 0:
            coeffs, rhs, rel = -coeffs, -rhs, {LE: GE, GE: LE, EQ: EQ}[rel]
        norm_rows.append((coeffs, rel, rhs))
    for k, rng in upper_ranges:
        coeffs = np.zeros(ncols)
        coeffs[col_a[k]] = 1.0
        norm_rows.append((coeffs, LE, rng))

    m = len(norm_rows)
    if m == 0:
        # Only bound-constrained columns left; each settles at its shifted zero.
        if any(c < 0 for c in costs):
            return LpSolution(UNBOUNDED)
        x = _reconstruct(red, kind, col_a, col_b, offset, sign, np.zeros(ncols), pos)
        return LpSolution(OPTIMAL, x, float(lp.objective @ x), 0)

    n_le = sum(1 for _, rel, _ in norm_rows if rel == LE)
    n_ge = sum(1 for _, rel, _ in norm_rows if rel == GE)
    n_eq = m - n_le - n_ge
    art_start = ncols + n_le + n_ge
    n_total = art_start + n_ge + n_eq
    A = np.zeros((m, n_total))
    b = np.zeros(m)
    basis = [0] * m
    slack_at, art_at = ncols, art_start
    for r, (coeffs, rel, rhs) in enumerate(norm_rows):
        A[r, :ncols] = coeffs
        b[r] = rhs
        if rel == LE:
            A[r, slack_at] = 1.0
            basis[r] = slack_at
            slack_at += 1
        else:
            if rel == GE:
                A[r, slack_at] = -1.0
                slack_at += 1
            A[r, art_at] = 1.0
            basis[r] = art_at
            art_at += 1
    c2 = np.zeros(n_total)
    c2[:ncols] = costs

    tab = _Tableau(A, b, c2, basis, art_start)
    if art_at > art_start:
        status = _simplex_loop(tab, tab.m, tab.n, tol, cap)
        if status != OPTIMAL:
            raise InternalConsistencyError("phase 1 is bounded by construction")
        scale = max(1.0, float(np.abs(b).max(initial=0.0)))
        if -tab.T[tab.m, tab.n] > tol * scale:
            return LpSolution(INFEASIBLE, iterations=tab.iterations)
        redundant = []
        for r in range(tab.m):
            if tab.basis[r] >= art_start:
                nz = np.flatnonzero(np.abs(tab.T[r, :art_start]) > 1e-9)
                if nz.size:
                    tab.pivot(r, int(nz[0]))
                else:
                    redundant.append(r)
        if redundant:
            tab.drop_rows(redundant)

    status = _simplex_loop(tab, tab.m + 1, art_start, tol, cap)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, iterations=tab.iterations)

    x_std = np.zeros(art_start)
    for r, j in enumerate(tab.basis):
        if j < art_start:
            x_std[j] = tab.T[r, tab.n]
    x = _reconstruct(red, kind, col_a, col_b, offset, sign, x_std, pos)
    return LpSolution(OPTIMAL, x, float(lp.objective @ x), tab.iterations)


def _reconstruct(red: _Reduced, kind, col_a, col_b, offset, sign,
                 x_std: np.ndarray, pos: dict[int, int]) -> np.ndarray:
    x = np.where(np.isnan(red.fixed_values), 0.0, red.fixed_values)
    for k, v in enumerate(red.keep):
        if kind[k] == _DEAD:
            x[v] = offset[k]
        elif kind[k] == _SPLIT:
            x[v] = x_std[col_a[k]] - x_std[col_b[k]]
        else:
            x[v] = offset[k] + sign[k] * x_std[col_a[k]]
    for t, v, _ in red.gadgets:
        k = pos[v]
        x[t] = x_std[col_a[k]] + x_std[col_b[k]]
    return x
