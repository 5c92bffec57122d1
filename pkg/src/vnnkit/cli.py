"""Command-line harness.

Subcommands: ``sparsify``, ``verify``, ``prune``, ``compare``,
``gen-fixtures``. Models travel in the ``vnn-model v1`` text format,
datasets as ``label,v0,v1,...`` CSV or MNIST IDX pairs. All outputs are
written atomically; on error no partial files are left behind.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import harness, model_io
from .datasets import TEST, TRAIN, VALIDATION, load_csv, load_mnist, save_csv, synth_blobs
from .errors import ConfigError, VnnkitError
from .network import count_nonzeros
from .oracle import OracleLimits
from .pruning import GLOBAL, PER_LAYER, mbp_prune, mbp_prune_to_sparsity
from .sparsify import ADDITIVE, MULTIPLICATIVE, SparsifyConfig, sparsify_network
from .training import train_fixture

FIXTURE_SPECS = [
    ("2x8", [8, 8], 101, 80),
    ("2x12", [12, 12], 102, 80),
    ("3x16", [16, 16, 16], 103, 60),
    ("2x20", [20, 20], 104, 80),
    ("4x32", [32, 32, 32, 32], 105, 40),
]


def _parse_deltas(text: str) -> list[float]:
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise ConfigError("at least one delta is required")
    deltas = [float(p) for p in parts]
    if any(d < 0 for d in deltas):
        raise ConfigError("deltas must be >= 0")
    return deltas


def _parse_layers(text: str) -> tuple[int, ...] | None:
    if text.strip().lower() in ("", "all"):
        return None
    return tuple(int(p) for p in text.split(",") if p.strip())


def _load_model(path: str):
    if not os.path.exists(path):
        raise ConfigError(f"model not found: {path}")
    return model_io.load(path)


def _load_data(args, split: str):
    """Dataset samples from --data CSV or an MNIST IDX pair."""
    if getattr(args, "data", None):
        if not os.path.exists(args.data):
            raise ConfigError(f"data file not found: {args.data}")
        return load_csv(args.data, split=split)
    if getattr(args, "mnist_images", None):
        if not args.mnist_labels:
            raise ConfigError("--mnist-images needs --mnist-labels")
        return load_mnist(args.mnist_images, args.mnist_labels,
                          paper_split=args.paper_split)
    raise ConfigError("no dataset given: use --data or --mnist-images/--mnist-labels")


def _read_config_file(path: str) -> dict[str, str]:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    known = {"epsilon", "epsilon_mode", "margin", "zero_threshold", "layers"}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    return values


def _build_config(args) -> SparsifyConfig:
    base = {
        "epsilon": 0.0, "epsilon_mode": ADDITIVE, "margin": 0.0,
        "zero_threshold": 1e-6, "layers": None,
    }
    if args.config:
        file_vals = _read_config_file(args.config)
        if "epsilon" in file_vals:
            base["epsilon"] = float(file_vals["epsilon"])
        if "epsilon_mode" in file_vals:
            base["epsilon_mode"] = file_vals["epsilon_mode"]
        if "margin" in file_vals:
            base["margin"] = float(file_vals["margin"])
        if "zero_threshold" in file_vals:
            base["zero_threshold"] = float(file_vals["zero_threshold"])
        if "layers" in file_vals:
            base["layers"] = _parse_layers(file_vals["layers"])
    if args.epsilon is not None:
        base["epsilon"] = args.epsilon
    if args.epsilon_mode is not None:
        base["epsilon_mode"] = args.epsilon_mode
    if args.margin is not None:
        base["margin"] = args.margin
    if args.zero_threshold is not None:
        base["zero_threshold"] = args.zero_threshold
    if args.layers is not None:
        base["layers"] = _parse_layers(args.layers)
    return SparsifyConfig(**base)


def cmd_sparsify(args) -> int:
    net = _load_model(args.model)
    cfg = _build_config(args)
    dataset = _load_data(args, split=VALIDATION)
    val = dataset.samples(VALIDATION)
    vnn, report = sparsify_network(net, val, cfg)
    model_io.save(vnn, args.out)
    report_path = args.report or args.out + ".report.csv"
    tmp = report_path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(report.to_csv())
    os.replace(tmp, report_path)
    before = count_nonzeros(net).total
    after = count_nonzeros(vnn).total
    print(f"sparsified {args.model} -> {args.out}")
    print(f"nonzeros: {before} -> {after} "
          f"({100.0 * (before - after) / max(before, 1):.1f}% reduction)")
    print(f"report: {report_path}")
    for note in report.warnings:
        print(f"warning: {note}")
    return 0


def cmd_verify(args) -> int:
    net = _load_model(args.model)
    deltas = _parse_deltas(args.delta)
    dataset = _load_data(args, split=args.split)
    xs, ys = dataset.split(args.split)
    if len(xs) == 0:
        raise ConfigError(f"dataset has no samples in split {args.split!r}")
    rows = harness.verification_sweep(
        net, xs, ys, deltas, args.method, clip=args.clip, jobs=args.jobs
    )
    if args.out:
        harness.write_sweep_csv(args.out, rows)
        print(f"results: {args.out}")
    for s in harness.summarize_sweep(rows):
        print(f"delta={s.delta:g} method={s.method}: verified "
              f"{s.verified}/{s.total} ({s.verified_pct:.1f}%), "
              f"mean time {s.mean_time_ms:.2f} ms")
    return 0


def cmd_prune(args) -> int:
    net = _load_model(args.model)
    if args.target_nnz is not None:
        pruned = mbp_prune_to_sparsity(net, args.target_nnz)
    elif args.rate is not None:
        scope = PER_LAYER if args.scope == "per-layer" else GLOBAL
        pruned = mbp_prune(net, args.rate, scope)
    else:
        raise ConfigError("prune needs --rate or --target-nnz")
    model_io.save(pruned, args.out)
    print(f"pruned {args.model} -> {args.out} "
          f"(nnz {count_nonzeros(net).total} -> {count_nonzeros(pruned).total})")
    return 0


def cmd_compare(args) -> int:
    original = _load_model(args.model)
    vnn = _load_model(args.vnn)
    deltas = _parse_deltas(args.delta)
    dataset = _load_data(args, split=TEST)
    xs, ys = dataset.split(TEST)
    if len(xs) == 0:
        raise ConfigError("dataset has no test samples")

    models = {"original": original, "vnn": vnn}
    models[f"mbp@{args.rate:g}"] = mbp_prune(original, args.rate, GLOBAL)
    target = count_nonzeros(vnn).total
    if target <= count_nonzeros(original).total:
        models["mbp@matched"] = mbp_prune_to_sparsity(original, target)

    curve_rows, summaries = harness.comparison_curves(
        models, xs, ys, deltas, args.method, clip=args.clip, jobs=args.jobs
    )
    os.makedirs(args.out_dir, exist_ok=True)
    curves_path = os.path.join(args.out_dir, "compare_curves.csv")
    harness.write_csv(curves_path, harness.CURVE_HEADER, curve_rows)

    md = [harness.comparison_markdown(models, xs, ys, summaries)]
    limits = OracleLimits()
    hidden = sum(l.out_dim for l in original.layers[:-1])
    oracle_delta = args.oracle_delta if args.oracle_delta is not None else deltas[0]
    if hidden <= limits.max_neurons:
        matrix = harness.oracle_matrix(
            original, vnn, xs, ys, oracle_delta, limits, clip=args.clip
        )
        md.append("")
        md.append(harness.matrix_markdown(matrix))
    else:
        md.append("")
        md.append(f"Exact-oracle matrix skipped: resource exceeded "
                  f"({hidden} hidden neurons > limit {limits.max_neurons}).")
    md_text = "\n".join(md) + "\n"
    md_path = os.path.join(args.out_dir, "compare.md")
    tmp = md_path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(md_text)
    os.replace(tmp, md_path)
    print(md_text)
    print(f"curves: {curves_path}")
    print(f"summary: {md_path}")
    return 0


def cmd_gen_fixtures(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    dataset = synth_blobs(260, 2, 2, seed=args.seed)
    for split, name in ((TRAIN, "train"), (VALIDATION, "val"), (TEST, "test")):
        path = os.path.join(args.out, f"blobs_{name}.csv")
        save_csv(dataset, path, split=split)
        print(f"wrote {path}")
    for name, hidden, seed_offset, epochs in FIXTURE_SPECS:
        net = train_fixture(dataset, hidden, seed=args.seed + seed_offset,
                            epochs=epochs)
        path = os.path.join(args.out, f"net_{name}.model")
        model_io.save(net, path)
        acc = harness.accuracy(net, *dataset.split(TEST))
        print(f"wrote {path} (test accuracy {100 * acc:.1f}%)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vnnkit",
        description="Sparsify ReLU networks into verification-friendly ones "
                    "and certify L-infinity robustness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_data_args(p):
        p.add_argument("--data", help="dataset CSV (label,v0,v1,...)")
        p.add_argument("--mnist-images", help="MNIST IDX image file")
        p.add_argument("--mnist-labels", help="MNIST IDX label file")
        p.add_argument("--paper-split", action="store_true",
                       help="keep the first 400 MNIST items: 200 validation, 200 test")

    p = sub.add_parser("sparsify", help="solve the layer programs and write the VNN")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="key=value file: epsilon, epsilon_mode, "
                                    "margin, zero_threshold, layers")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--epsilon-mode", choices=[ADDITIVE, MULTIPLICATIVE], default=None)
    p.add_argument("--margin", type=float, default=None)
    p.add_argument("--zero-threshold", type=float, default=None)
    p.add_argument("--layers", default=None, help="comma list of 1-based layers, or 'all'")
    p.add_argument("--report", help="report CSV path (default: <out>.report.csv)")
    add_data_args(p)
    p.set_defaults(func=cmd_sparsify)

    p = sub.add_parser("verify", help="run a verifier over a delta grid")
    p.add_argument("--model", required=True)
    p.add_argument("--delta", required=True, help="comma list of radii")
    p.add_argument("--method", choices=["interval", "polyhedral"], default="polyhedral")
    p.add_argument("--split", choices=[TRAIN, VALIDATION, TEST], default=TEST)
    p.add_argument("--clip", action="store_true", help="clamp the input box to [0,1]")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="results CSV path")
    add_data_args(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("prune", help="magnitude-based pruning baseline")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rate", type=float, default=None)
    p.add_argument("--scope", choices=["global", "per-layer"], default="global")
    p.add_argument("--target-nnz", type=int, default=None)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("compare", help="original vs VNN vs MBP curves and oracle matrix")
    p.add_argument("--model", required=True, help="original model")
    p.add_argument("--vnn", required=True, help="sparsified model")
    p.add_argument("--delta", required=True)
    p.add_argument("--rate", type=float, default=0.1, help="MBP pruning rate")
    p.add_argument("--method", choices=["interval", "polyhedral"], default="polyhedral")
    p.add_argument("--clip", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--oracle-delta", type=float, default=None,
                   help="delta for the exact-oracle matrix (default: first delta)")
    p.add_argument("--out-dir", default="compare_out")
    add_data_args(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen-fixtures", help="write the blob dataset and fixture models")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_fixtures)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (VnnkitError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"unexpected error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
