"""Experiment runner and command-line surface.

`run` fits one reference clustering per configuration, builds every
requested method at every leaf budget, and writes a results.csv plus a
trace file per expansion run and JSON/DOT exports per tree. `explain`
prints the root-to-leaf decision path of a point through an exported tree.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from xkmeans.baselines import build_gini_tree, build_kdtree
from xkmeans.core import CostReport, DataMatrix, accuracy, kmeans_cost, load_csv, surrogate_cost
from xkmeans.exkmc import expand, root_tree
from xkmeans.imm import build_imm
from xkmeans.kmeans import KMeansConfig, fit_reference
from xkmeans.synth import SyntheticIISpec, gen_gaussian_blobs, gen_synthetic_i, gen_synthetic_ii
from xkmeans.tree import ThresholdTree

METHODS = ("exkmc", "exkmc_imm", "imm", "kdtree", "gini_tree")

RESULT_COLUMNS = (
    "method",
    "k_prime",
    "kmeans_cost",
    "surrogate_cost",
    "cost_ratio",
    "accuracy",
    "wall_time_ms",
)


@dataclass
class ExperimentConfig:
    k: int
    data: str | None = None
    columns: list[int] | None = None
    synth: str | None = None
    synth_d: int = 1024
    synth_n: int = 500
    separation: float = 5.0
    budgets: list[int] = field(default_factory=list)
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    kmeans: KMeansConfig | None = None
    out: str = "results"
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if (self.data is None) == (self.synth is None):
            raise ValueError("exactly one of a csv path or a synthetic spec is required")
        if not self.budgets:
            self.budgets = [self.k * m for m in (1, 2, 3, 4)]
        if sorted(self.budgets) != self.budgets:
            raise ValueError("leaf budgets must be sorted ascending")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods: {', '.join(unknown)}; choose from {', '.join(METHODS)}")
        if self.kmeans is None:
            self.kmeans = KMeansConfig(k=self.k, seed=self.seed)


def parse_budgets(text: str, k: int) -> list[int]:
    """Comma list of leaf budgets; a token like '3k' means 3 * k."""
    budgets = []
    for token in text.split(","):
        token = token.strip().lower()
        if not token:
            continue
        if token.endswith("k"):
            factor = token[:-1] or "1"
            budgets.append(int(factor) * k)
        else:
            budgets.append(int(token))
    if not budgets:
        raise ValueError("no leaf budgets given")
    return budgets


def _load_dataset(config: ExperimentConfig) -> DataMatrix:
    if config.data is not None:
        return load_csv(config.data, columns=config.columns)
    name = config.synth
    if name == "synthetic1":
        return gen_synthetic_i(seed=config.seed)
    if name == "synthetic2":
        spec = SyntheticIISpec(k=config.k, d=config.synth_d, seed=config.seed)
        X, _, _ = gen_synthetic_ii(spec)
        return X
    if name == "blobs":
        X, _ = gen_gaussian_blobs(
            config.k, config.synth_n, config.synth_d, config.separation, seed=config.seed
        )
        return X
    raise ValueError(f"unknown synthetic dataset {name!r}; choose synthetic1, synthetic2, or blobs")


def _leaf_partition(tree: ThresholdTree) -> list[np.ndarray]:
    return [tree.node(i).point_ids for i in tree.leaf_ids()]


def _score(X, tree, reference, assignment) -> CostReport:
    cells = _leaf_partition(tree)
    return CostReport.build(
        kmeans_cost=kmeans_cost(X, assignment),
        surrogate_cost=surrogate_cost(X, cells, reference.centers),
        leaf_count=tree.leaf_count,
        reference_cost=reference.cost,
        accuracy=accuracy(reference.assignment, assignment),
    )


def run_experiment(config: ExperimentConfig) -> dict:
    """Execute one configuration; returns the output paths and result rows."""
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    X = _load_dataset(config)
    if config.k > X.n:
        raise ValueError(f"k={config.k} exceeds dataset size n={X.n}")

    reference = fit_reference(X, config.kmeans)
    rows: list[dict] = [
        {
            "method": "reference",
            "k_prime": config.k,
            "kmeans_cost": reference.cost,
            "surrogate_cost": reference.cost,
            "cost_ratio": 1.0,
            "accuracy": 1.0,
            "wall_time_ms": 0.0,
        }
    ]
    paths: dict[str, Path] = {}

    imm_base = None
    base_ms = 0.0
    if any(m in config.methods for m in ("imm", "exkmc_imm")):
        base_started = time.perf_counter()
        imm_base = build_imm(X, reference.centers, reference.assignment)
        base_ms = (time.perf_counter() - base_started) * 1000.0

    for method in config.methods:
        for budget in config.budgets:
            started = time.perf_counter()
            trace = None
            if method == "imm":
                tree = imm_base
            elif method == "exkmc_imm":
                if budget < imm_base.leaf_count:
                    raise ValueError(
                        f"budget {budget} is below the base tree's {imm_base.leaf_count} leaves"
                    )
                result = expand(X, reference.centers, imm_base, budget, jobs=config.jobs)
                tree, trace = result.tree, result.trace
            elif method == "exkmc":
                result = expand(X, reference.centers, root_tree(X, reference.centers), budget, jobs=config.jobs)
                tree, trace = result.tree, result.trace
            elif method == "kdtree":
                tree = build_kdtree(X, reference.centers, budget).tree
            else:  # gini_tree
                tree = build_gini_tree(X, reference.assignment, budget).tree
            elapsed_ms = (time.perf_counter() - started) * 1000.0
            if method in ("imm", "exkmc_imm"):
                # the shared base build is part of these methods' construction
                elapsed_ms += base_ms

            assignment = tree.induced_assignment(X)
            report = _score(X, tree, reference, assignment)
            rows.append(
                {
                    "method": method,
                    "k_prime": budget,
                    "kmeans_cost": report.kmeans_cost,
                    "surrogate_cost": report.surrogate_cost,
                    "cost_ratio": report.cost_ratio,
                    "accuracy": report.accuracy,
                    "wall_time_ms": elapsed_ms,
                }
            )

            stem = f"{method}_k{budget}"
            (out_dir / f"tree_{stem}.json").write_text(tree.to_json() + "\n")
            (out_dir / f"tree_{stem}.dot").write_text(tree.export_dot())
            paths[f"tree_{stem}"] = out_dir / f"tree_{stem}.json"
            if trace is not None:
                trace_path = out_dir / f"trace_{stem}.jsonl"
                with trace_path.open("w") as fh:
                    for step in trace:
                        fh.write(json.dumps(step.to_dict()) + "\n")
                paths[f"trace_{stem}"] = trace_path

    results_path = out_dir / "results.csv"
    with results_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row["method"],
                    row["k_prime"],
                    repr(float(row["kmeans_cost"])),
                    repr(float(row["surrogate_cost"])),
                    repr(float(row["cost_ratio"])),
                    repr(float(row["accuracy"])),
                    repr(float(row["wall_time_ms"])),
                ]
            )
    paths["results"] = results_path
    return {"paths": paths, "rows": rows, "reference_cost": reference.cost}


def explain_point(tree_path, point) -> tuple[list[tuple[int, float, str]], int | None]:
    """Decision path of one point through an exported tree."""
    tree = ThresholdTree.from_json(Path(tree_path).read_text())
    return tree.decision_path(np.asarray(point, dtype=np.float64))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xkmeans", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a benchmark configuration")
    source = run.add_mutually_exclusive_group(required=True)
    source.add_argument("--data", help="csv dataset path")
    source.add_argument("--synth", choices=("synthetic1", "synthetic2", "blobs"))
    run.add_argument("--columns", help="comma list of csv column indices to keep")
    run.add_argument("--k", type=int, required=True, help="number of clusters")
    run.add_argument("--leaves", default="k,2k,3k,4k", help="comma list of budgets; '3k' scales k")
    run.add_argument("--methods", default=",".join(METHODS), help="comma list of methods")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--jobs", type=int, default=1, help="feature-parallel scan workers")
    run.add_argument("--out", default="results", help="output directory")
    run.add_argument("--d", type=int, default=1024, help="synthetic dimensionality")
    run.add_argument("--n", type=int, default=500, help="blob dataset size")
    run.add_argument("--separation", type=float, default=5.0, help="blob center separation")

    explain = sub.add_parser("explain", help="explain one point's cluster assignment")
    explain.add_argument("--tree", required=True, help="tree json produced by run")
    explain.add_argument("--point", required=True, help="comma list of feature values")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            config = ExperimentConfig(
                k=args.k,
                data=args.data,
                columns=[int(c) for c in args.columns.split(",")] if args.columns else None,
                synth=args.synth,
                synth_d=args.d,
                synth_n=args.n,
                separation=args.separation,
                budgets=parse_budgets(args.leaves, args.k),
                methods=[m.strip() for m in args.methods.split(",") if m.strip()],
                out=args.out,
                seed=args.seed,
                jobs=args.jobs,
            )
            outcome = run_experiment(config)
            print(f"wrote {outcome['paths']['results']}")
            return 0
        path, label = explain_point(args.tree, [float(v) for v in args.point.split(",")])
        for feature, threshold, direction in path:
            comparison = "<=" if direction == "left" else ">"
            print(f"feature {feature} {comparison} {threshold!r}")
        print(f"label {label}")
        return 0
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
