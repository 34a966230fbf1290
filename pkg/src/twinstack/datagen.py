"""Operational-space data generator and strong-scaling harness.

Recursively explores a bounded parameter space: sample P points per region,
label them with a synthetic stability oracle, score the label mix with a
binary entropy criterion, and subdivide interesting regions (or, for the
benchmark workload, every region) down to a fixed depth with a fixed
branching factor. Every oracle evaluation is one schedulable task; with full
expansion the task count is exactly P * sum(B^d for d in 0..D).

The dataset is canonically ordered (region id, then point index), so its
bytes are identical for any worker count under a fixed seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

STABLE = "stable"
UNSTABLE = "unstable"


@dataclass(frozen=True)
class Region:
    """One box of the exploration tree; the path doubles as its id."""

    path: tuple  # (0,) is the root; children append their index
    bounds: tuple  # per-dimension (lo, hi)
    depth: int
    parent: Optional[str] = None

    @property
    def id(self) -> str:
        return "/".join(str(p) for p in self.path)

    def volume(self) -> float:
        return math.prod(hi - lo for lo, hi in self.bounds)


@dataclass(frozen=True)
class ExplorationConfig:
    dims: int
    depth: int
    branch: int
    points: int
    bounds: Optional[tuple] = None  # default unit cube
    entropy_threshold: float = 0.3
    seed: int = 0
    expansion: str = "full"  # or "margin"

    def __post_init__(self):
        if self.dims < 1:
            raise ValueError("dims must be >= 1")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if self.branch < 2:
            raise ValueError("branch must be >= 2")
        if self.points < 1:
            raise ValueError("points must be >= 1")
        if self.expansion not in ("full", "margin"):
            raise ValueError("expansion must be 'full' or 'margin'")
        if self.bounds is not None and len(self.bounds) != self.dims:
            raise ValueError("bounds must list one (lo, hi) per dimension")

    def root_bounds(self) -> tuple:
        return self.bounds if self.bounds is not None else tuple((0.0, 1.0) for _ in range(self.dims))

    def expected_tasks(self) -> int:
        """Full-expansion task count: P * sum(B^d)."""
        return self.points * sum(self.branch**d for d in range(self.depth + 1))


class StabilityOracle:
    """Synthetic stability margin: stable iff g(z) <= 0 for a seeded
    affine-plus-quadratic form over coordinates normalized to [-1, 1].

    The offset is calibrated at construction (median of g over a seeded root
    sample) so both labels occur inside the root region. `cost_s` simulates
    per-evaluation compute: "wait" blocks the worker for the duration (the
    default; scaling runs then measure scheduler behavior, not host cores),
    "spin" burns CPU instead.
    """

    def __init__(self, dims: int, bounds: Optional[Sequence] = None, seed: int = 0,
                 cost_s: float = 0.0, cost_model: str = "wait"):
        if cost_model not in ("wait", "spin"):
            raise ValueError("cost_model must be 'wait' or 'spin'")
        self.dims = dims
        self.bounds = tuple(bounds) if bounds is not None else tuple((0.0, 1.0) for _ in range(dims))
        self.cost_s = cost_s
        self.cost_model = cost_model
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0]))
        self._linear = rng.standard_normal(dims)
        q = rng.standard_normal((dims, dims)) / math.sqrt(dims)
        self._quad = (q + q.T) / 2.0
        probe = rng.uniform(-1.0, 1.0, size=(256, dims))
        raw = probe @ self._linear + np.einsum("ij,jk,ik->i", probe, self._quad, probe)
        self._offset = float(np.median(raw))

    def _normalize(self, x: Sequence[float]) -> np.ndarray:
        z = np.empty(self.dims)
        for d, (lo, hi) in enumerate(self.bounds):
            z[d] = 2.0 * (x[d] - lo) / (hi - lo) - 1.0
        return z

    def margin(self, x: Sequence[float]) -> float:
        z = self._normalize(x)
        return float(z @ self._linear + z @ self._quad @ z - self._offset)

    def evaluate(self, x: Sequence[float]) -> str:
        if self.cost_s > 0:
            if self.cost_model == "wait":
                time.sleep(self.cost_s)
            else:
                deadline = time.perf_counter() + self.cost_s
                acc = 0.0
                while time.perf_counter() < deadline:
                    acc += math.sqrt(abs(acc) + 1.0)
        return STABLE if self.margin(x) <= 0 else UNSTABLE


def entropy(labels: Sequence[str]) -> float:
    """Binary label entropy in bits; 0*log(0) reads as 0."""
    if len(labels) == 0:
        raise ValueError("entropy of an empty label list is undefined")
    p = sum(1 for l in labels if l == STABLE) / len(labels)
    h = 0.0
    for q in (p, 1.0 - p):
        if q > 0:
            h -= q * math.log2(q)
    return h


def _split_gain(coords: Sequence[float], labels: Sequence[str]) -> float:
    """Best single-threshold information gain along one dimension."""
    order = sorted(range(len(coords)), key=lambda i: coords[i])
    sorted_coords = [coords[i] for i in order]
    sorted_labels = [labels[i] for i in order]
    base = entropy(labels)
    n = len(labels)
    best = 0.0
    left_stable = 0
    total_stable = sum(1 for l in labels if l == STABLE)
    for i in range(n - 1):
        if sorted_labels[i] == STABLE:
            left_stable += 1
        if sorted_coords[i] == sorted_coords[i + 1]:
            continue  # no threshold separates equal coordinates
        n_left = i + 1
        n_right = n - n_left
        p_left = left_stable / n_left
        p_right = (total_stable - left_stable) / n_right
        h = 0.0
        for count, p in ((n_left, p_left), (n_right, p_right)):
            for q in (p, 1.0 - p):
                if q > 0:
                    h -= (count / n) * q * math.log2(q)
        best = max(best, base - h)
    return best


def select_split_dimension(points: Sequence[Sequence[float]], labels: Sequence[str]) -> Optional[int]:
    """Dimension with the best decision-stump information gain; ties take the
    lowest index. Returns None when only one label is present (no split)."""
    if len(points) < 2:
        return None
    if len(set(labels)) < 2:
        return None
    dims = len(points[0])
    gains = [_split_gain([p[d] for p in points], labels) for d in range(dims)]
    return int(np.argmax(gains))


def subdivide(region: Region, dim: int, branch: int) -> list:
    """Equal-width partition of one dimension into `branch` children."""
    if branch < 2:
        raise ValueError("branch must be >= 2")
    lo, hi = region.bounds[dim]
    edges = [lo + (hi - lo) * i / branch for i in range(branch + 1)]
    edges[-1] = hi  # avoid float drift at the outer edge
    children = []
    for i in range(branch):
        bounds = list(region.bounds)
        bounds[dim] = (edges[i], edges[i + 1])
        children.append(
            Region(path=region.path + (i,), bounds=tuple(bounds),
                   depth=region.depth + 1, parent=region.id)
        )
    return children


@dataclass
class DatasetRecord:
    point: tuple
    label: str
    region: str
    depth: int


@dataclass
class LabeledDataset:
    records: List[DatasetRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def to_csv(self) -> str:
        if not self.records:
            return ""
        dims = len(self.records[0].point)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"x{d}" for d in range(dims)] + ["label", "region", "depth"])
        for r in self.records:
            writer.writerow([repr(v) for v in r.point] + [r.label, r.region, str(r.depth)])
        return buf.getvalue()


@dataclass
class RunMetrics:
    task_count: int
    makespan_s: float
    mean_task_s: float
    workers: int
    regions: int
    seed: int
    expansion: str

    def to_json(self) -> dict:
        return self.__dict__.copy()


def _region_points(region: Region, config: ExplorationConfig) -> np.ndarray:
    """P seeded uniform points; the stream is keyed by (seed, region path)."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, *region.path]))
    unit = rng.random((config.points, config.dims))
    lo = np.array([b[0] for b in region.bounds])
    hi = np.array([b[1] for b in region.bounds])
    return lo + unit * (hi - lo)


def _widest_dimension(region: Region) -> int:
    widths = [hi - lo for lo, hi in region.bounds]
    return int(np.argmax(widths))


def explore(config: ExplorationConfig, oracle: StabilityOracle,
            workers: int = 1) -> tuple:
    """Run the exploration; returns (LabeledDataset, RunMetrics).

    Oracle evaluations fan out over a worker pool wave by wave; region
    bookkeeping (entropy, split choice, subdivision) is sequential between
    waves. Output order is canonical (region path, point index), so the
    dataset is identical for any worker count.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    root = Region(path=(0,), bounds=config.root_bounds(), depth=0)
    wave = [root]
    dataset = LabeledDataset()
    task_count = 0
    task_time = 0.0
    regions_seen = 0
    t_start = time.perf_counter()

    with ThreadPoolExecutor(max_workers=workers) as pool:
        while wave:
            regions_seen += len(wave)
            points_per_region = {r.id: _region_points(r, config) for r in wave}
            jobs = [
                (region, idx, tuple(point))
                for region in wave
                for idx, point in enumerate(points_per_region[region.id])
            ]

            def evaluate(job):
                region, idx, point = job
                t0 = time.perf_counter()
                label = oracle.evaluate(point)
                return region.id, idx, point, label, time.perf_counter() - t0

            results = list(pool.map(evaluate, jobs))
            task_count += len(results)
            task_time += sum(r[4] for r in results)
            by_region: Dict[str, list] = {r.id: [None] * config.points for r in wave}
            for region_id, idx, point, label, _ in results:
                by_region[region_id][idx] = (point, label)

            next_wave: list = []
            for region in wave:  # canonical order
                rows = by_region[region.id]
                labels = [label for _, label in rows]
                for point, label in rows:
                    dataset.records.append(
                        DatasetRecord(point=point, label=label, region=region.id, depth=region.depth)
                    )
                if region.depth >= config.depth:
                    continue
                if config.expansion == "margin" and entropy(labels) <= config.entropy_threshold:
                    continue
                dim = select_split_dimension([p for p, _ in rows], labels)
                if dim is None:
                    dim = _widest_dimension(region)
                next_wave.extend(subdivide(region, dim, config.branch))
            wave = next_wave

    makespan = time.perf_counter() - t_start
    metrics = RunMetrics(
        task_count=task_count,
        makespan_s=makespan,
        mean_task_s=task_time / task_count if task_count else 0.0,
        workers=workers,
        regions=regions_seen,
        seed=config.seed,
        expansion=config.expansion,
    )
    return dataset, metrics


# --- strong scaling ---------------------------------------------------------------


@dataclass
class ScalingRow:
    workers: int
    mean_time_s: float
    ci_half_s: float
    speedup: float
    efficiency: float


def strong_scaling_run(config: ExplorationConfig, oracle: StabilityOracle,
                       worker_counts: Sequence[int], repeats: int = 1) -> list:
    """Fixed problem, increasing workers; speedup normalized to the smallest
    worker count. Confidence half-widths are 1.96 * stderr over repeats."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    counts = sorted(worker_counts)
    times: Dict[int, list] = {}
    for w in counts:
        times[w] = []
        for _ in range(repeats):
            _, metrics = explore(config, oracle, workers=w)
            times[w].append(metrics.makespan_s)
    base_w = counts[0]
    base = statistics.mean(times[base_w])
    rows = []
    for w in counts:
        mean_t = statistics.mean(times[w])
        if repeats > 1:
            ci = 1.96 * statistics.stdev(times[w]) / math.sqrt(repeats)
        else:
            ci = 0.0
        speedup = base / mean_t * base_w  # normalized to the baseline worker count
        rows.append(
            ScalingRow(workers=w, mean_time_s=mean_t, ci_half_s=ci,
                       speedup=speedup, efficiency=speedup / w)
        )
    return rows


def simulate_cluster(total_tasks: int, task_s: float, slots_per_node: int,
                     node_counts: Sequence[int], overhead_s: float,
                     waves: int) -> list:
    """Closed-form strong-scaling model for cluster-sized runs.

    T(n) = max(total_work / (n * slots), critical_path) + overhead * tasks / n,
    with critical_path = waves * task_s (each exploration level must finish
    before its children start). Speedup is normalized to the smallest count.
    """
    total_work = total_tasks * task_s
    critical_path = waves * task_s
    counts = sorted(node_counts)

    def t_of(n: int) -> float:
        return max(total_work / (n * slots_per_node), critical_path) + overhead_s * total_tasks / n

    base_n = counts[0]
    base_t = t_of(base_n)
    rows = []
    for n in counts:
        t = t_of(n)
        speedup = base_t / t * base_n
        rows.append(ScalingRow(workers=n, mean_time_s=t, ci_half_s=0.0,
                               speedup=speedup, efficiency=speedup / n))
    return rows


def scaling_csv(rows: Sequence[ScalingRow], repeats: int) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["workers", "mean_time_s", "ci_half_s", "speedup", "efficiency", "repeats"])
    for r in rows:
        writer.writerow([r.workers, f"{r.mean_time_s:.6f}", f"{r.ci_half_s:.6f}",
                         f"{r.speedup:.4f}", f"{r.efficiency:.4f}", repeats])
    return buf.getvalue()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="datagen", description="Operational-space data generator")
    parser.add_argument("--dims", type=int, default=3)
    parser.add_argument("--depth", type=int, default=3)
    parser.add_argument("--branch", type=int, default=4)
    parser.add_argument("--points", type=int, default=170)
    parser.add_argument("--expansion", choices=["full", "margin"], default="full")
    parser.add_argument("--threshold", type=float, default=0.3, help="entropy threshold (margin mode)")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--task-cost", type=float, default=0.0, help="synthetic cost per task, ms")
    parser.add_argument("--cost-model", choices=["wait", "spin"], default="wait")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)

    config = ExplorationConfig(
        dims=args.dims, depth=args.depth, branch=args.branch, points=args.points,
        entropy_threshold=args.threshold, seed=args.seed, expansion=args.expansion,
    )
    oracle = StabilityOracle(args.dims, seed=args.seed, cost_s=args.task_cost / 1e3,
                             cost_model=args.cost_model)
    dataset, metrics = explore(config, oracle, workers=args.workers)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "dataset.csv").write_text(dataset.to_csv(), encoding="utf-8")
    (out / "metrics.json").write_text(json.dumps(metrics.to_json(), indent=2), encoding="utf-8")
    print(f"datagen: {metrics.task_count} tasks over {metrics.regions} regions "
          f"in {metrics.makespan_s:.2f}s with {args.workers} worker(s) -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
