"""Experiment harness: verification sweeps, model comparisons, oracle tallies.

Everything here is deterministic apart from wall-clock columns; result rows
are produced in (delta, sample) order regardless of worker count, so two
runs of the same experiment emit byte-identical CSVs except for timings.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .network import Network, forward_batch
from .oracle import (
    NOT_ROBUST,
    RESOURCE_EXCEEDED,
    ROBUST,
    OracleLimits,
    exact_verify,
)
from .verify import RobustnessProperty, verify_robustness

ORACLE_STATUSES = (ROBUST, NOT_ROBUST, RESOURCE_EXCEEDED)


def accuracy(net: Network, xs: np.ndarray, ys: np.ndarray) -> float:
    if len(xs) == 0:
        return 0.0
    return float(np.mean(forward_batch(net, xs).argmax(axis=1) == ys))


@dataclass
class SweepRow:
    sample_id: int
    delta: float
    method: str
    verdict: str
    time_ms: float
    min_margin_lb: float | None  # None when the sample was skipped

    def csv_fields(self) -> list[str]:
        lb = "" if self.min_margin_lb is None else repr(self.min_margin_lb)
        return [
            str(self.sample_id), repr(self.delta), self.method,
            self.verdict, f"{self.time_ms:.3f}", lb,
        ]


SWEEP_HEADER = "sample_id,delta,method,verdict,time_ms,min_margin_lb"


def verification_sweep(net: Network, xs: np.ndarray, ys: np.ndarray,
                       deltas: list[float], method: str,
                       clip: bool = False, jobs: int = 1) -> list[SweepRow]:
    """Verify every sample at every delta.

    Samples the network misclassifies at delta=0 are not run through the
    verifier; they are recorded as ``unknown`` (counting against the
    verified percentage), which makes verified% at delta=0 coincide with
    plain accuracy.
    """
    correct = forward_batch(net, xs).argmax(axis=1) == ys
    rows: list[SweepRow] = []

    def job(args):
        sample_id, delta = args
        if not correct[sample_id]:
            return SweepRow(sample_id, delta, method, "unknown", 0.0, None)
        prop = RobustnessProperty(xs[sample_id], delta, int(ys[sample_id]), clip)
        res = verify_robustness(net, prop, method)
        return SweepRow(sample_id, delta, method, res.verdict,
                        res.time_seconds * 1e3, res.min_margin_lb)

    work = [(i, d) for d in deltas for i in range(len(xs))]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(job, work))
    else:
        rows = [job(w) for w in work]
    return rows


@dataclass
class SweepSummary:
    delta: float
    method: str
    verified: int
    total: int
    mean_time_ms: float

    @property
    def verified_pct(self) -> float:
        return 100.0 * self.verified / self.total if self.total else 0.0


def summarize_sweep(rows: list[SweepRow]) -> list[SweepSummary]:
    out = []
    for delta in sorted({r.delta for r in rows}):
        for method in sorted({r.method for r in rows}):
            bucket = [r for r in rows if r.delta == delta and r.method == method]
            if not bucket:
                continue
            verified = sum(r.verdict == "verified" for r in bucket)
            mean_ms = float(np.mean([r.time_ms for r in bucket]))
            out.append(SweepSummary(delta, method, verified, len(bucket), mean_ms))
    return out


def write_csv(path: str, header: str, rows: list[list[str]]) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for fields in rows:
            fh.write(",".join(fields) + "\n")
    os.replace(tmp, path)


def write_sweep_csv(path: str, rows: list[SweepRow]) -> None:
    write_csv(path, SWEEP_HEADER, [r.csv_fields() for r in rows])


# ---------------------------------------------------------------------------
# model comparison (original vs VNN vs MBP)

CURVE_HEADER = "model,delta,method,verified,total,verified_pct,mean_time_ms"


def comparison_curves(models: dict[str, Network], xs, ys, deltas,
                      method: str, clip: bool = False,
                      jobs: int = 1) -> tuple[list[list[str]], dict]:
    """Verified-robustness curve rows per model plus raw summaries."""
    curve_rows = []
    summaries: dict[str, list[SweepSummary]] = {}
    for name, net in models.items():
        rows = verification_sweep(net, xs, ys, deltas, method, clip, jobs)
        sums = summarize_sweep(rows)
        summaries[name] = sums
        for s in sums:
            curve_rows.append([
                name, repr(s.delta), s.method, str(s.verified),
                str(s.total), f"{s.verified_pct:.2f}", f"{s.mean_time_ms:.3f}",
            ])
    return curve_rows, summaries


def comparison_markdown(models: dict[str, Network], xs, ys,
                        summaries: dict) -> str:
    """Markdown table: accuracy plus verified % per delta for each model."""
    lines = []
    names = list(models)
    deltas = sorted({s.delta for sums in summaries.values() for s in sums})
    header = ["model", "accuracy"] + [f"verified% d={d:g}" for d in deltas]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "|".join(["---"] * len(header)) + "|")
    for name in names:
        acc = accuracy(models[name], xs, ys)
        cells = [name, f"{100 * acc:.1f}"]
        for d in deltas:
            match = [s for s in summaries[name] if s.delta == d]
            cells.append(f"{match[0].verified_pct:.1f}" if match else "-")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# exact-oracle matrix (original verdicts x VNN verdicts)


def oracle_matrix(original: Network, vnn: Network, xs, ys, delta: float,
                  limits: OracleLimits = OracleLimits(),
                  clip: bool = False) -> dict:
    """3x3 verdict tally over (sample, adversarial class) states.

    Every test sample contributes one state per class other than its label,
    so the cell counts sum to samples x (classes - 1).
    """
    counts = {a: {b: 0 for b in ORACLE_STATUSES} for a in ORACLE_STATUSES}
    classes = original.out_dim
    for i in range(len(xs)):
        label = int(ys[i])
        for c in range(classes):
            if c == label:
                continue
            prop = RobustnessProperty(xs[i], delta, label, clip)
            r_orig = exact_verify(original, prop, limits, target_class=c)
            r_vnn = exact_verify(vnn, prop, limits, target_class=c)
            counts[r_orig.status][r_vnn.status] += 1
    return {
        "counts": counts,
        "total": len(xs) * (classes - 1),
        "delta": delta,
    }


def matrix_markdown(matrix: dict) -> str:
    labels = {ROBUST: "Robust", NOT_ROBUST: "Not robust",
              RESOURCE_EXCEEDED: "Resource exceeded"}
    lines = [
        f"Exact-oracle verdicts at delta={matrix['delta']:g} "
        f"({matrix['total']} states: rows = original, columns = VNN)",
        "",
        "| original \\ VNN | " + " | ".join(labels[s] for s in ORACLE_STATUSES) + " |",
        "|" + "|".join(["---"] * (len(ORACLE_STATUSES) + 1)) + "|",
    ]
    for a in ORACLE_STATUSES:
        row = [labels[a]] + [str(matrix["counts"][a][b]) for b in ORACLE_STATUSES]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines)
