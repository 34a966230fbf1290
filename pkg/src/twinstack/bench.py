"""End-to-end benchmark harness mirroring the three runtime experiments.

exp1 measures sensor-stream bandwidth over a (sampling x aggregation)
interval grid on the virtual clock, metering at the broker. exp2 measures
sensor-to-actuation response times for the blocked-matmul workflow in the
three execution modes. exp3 runs the data-generator strong-scaling study at
desk scale plus a closed-form simulated-cluster model at paper scale.

Every emitted CSV cell carries its repeat count; exp1 rates come from the
broker's bandwidth meter, never sender-side estimates.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import statistics
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import messaging
from .clock import VirtualClock
from .cloud import CloudNode
from .config import parse_config
from .datagen import (
    ExplorationConfig,
    StabilityOracle,
    scaling_csv,
    simulate_cluster,
    strong_scaling_run,
)
from .edge import EdgeNode
from .offload import measure_response

SEC_NS = 1_000_000_000
MS_NS = 1_000_000

EXP1_TS_MS = (1.0, 10.0, 100.0, 1000.0, 10_000.0)
EXP1_TA_MS = (1.0, 10.0, 100.0, 1000.0, 10_000.0)
EXP2_B = (4, 8, 16, 32, 64, 128, 256, 512)
EXP2_MODES = ("sequential", "local-parallel", "offload")
EXP3_WORKERS = (1, 2, 4, 8)
PAPER_NODES = (1, 2, 4, 8, 16, 32, 64)
PAPER_TASKS = 14_450
PAPER_TASK_S = 23.62
PAPER_SLOTS_PER_NODE = 112
SIM_OVERHEAD_S = 0.01


def _edge_config_json(ts_ms: float, ta_ms: float, method: str, seed: int) -> str:
    return json.dumps(
        {
            "global-properties": {
                "type": "edge",
                "label": "edge1",
                "window-size": 10,
                # keep heartbeats out of the measured window scale
                "heartbeat-interval": 60_000,
            },
            "devices": [
                {
                    "label": "V1",
                    "driver": "synthetic-sine",
                    "properties": {
                        "aggregate": method,
                        "sampling-interval": ts_ms,
                        "aggregate-interval": ta_ms,
                        "amplitude": 230.0,
                        "frequency": 50.0,
                        "noise-std": 0.5,
                        "seed": seed,
                    },
                }
            ],
        }
    )


def exp1_cell_rate(ts_ms: float, ta_ms: float, method: str, seed: int = 0,
                   measure_intervals: int = 3) -> float:
    """Bytes/s of the sensor stream for one grid cell, on the virtual clock.

    One warm-up aggregation interval, then exactly `measure_intervals`
    intervals metered at the broker (sensor keys only).
    """
    clock = VirtualClock(start_ns=0)
    broker = messaging.Broker(clock=clock)
    cloud = CloudNode(
        parse_config('{"global-properties": {"type": "cloud", "label": "cloud1"}}'),
        plane=broker,
        clock=clock,
    ).start()
    edge = EdgeNode(parse_config(_edge_config_json(ts_ms, ta_ms, method, seed)),
                    plane=broker, clock=clock)
    duration_s = (1 + measure_intervals) * ta_ms / 1e3
    try:
        edge.run(duration_s)
    finally:
        cloud.stop()
    t0 = int(ta_ms * MS_NS)
    t1 = int((1 + measure_intervals) * ta_ms * MS_NS)
    return broker.meter.rate_over(t0, t1, pattern="edge.*.sensors.*")


@dataclass
class Exp1Result:
    method: str
    ts_ms: tuple
    ta_ms: tuple
    rates: Dict[tuple, float]  # (ts, ta) -> mean bytes/s
    repeats: int

    def rate(self, ts_ms: float, ta_ms: float) -> Optional[float]:
        return self.rates.get((ts_ms, ta_ms))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["ts_ms", "ta_ms", "bytes_per_s", "repeats"])
        for (ts, ta), rate in sorted(self.rates.items()):
            writer.writerow([ts, ta, f"{rate:.2f}", self.repeats])
        return buf.getvalue()

    def to_table(self) -> str:
        lines = [f"Required bandwidth (bytes/s), {self.method} aggregation"]
        header = ["Ts(ms)\\Ta(ms)"] + [f"{ta:g}" for ta in self.ta_ms]
        rows = [header]
        for ts in self.ts_ms:
            row = [f"{ts:g}"]
            for ta in self.ta_ms:
                rate = self.rates.get((ts, ta))
                row.append("-" if rate is None else f"{rate:.0f}")
            rows.append(row)
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        for r in rows:
            lines.append("  ".join(cell.rjust(w) for cell, w in zip(r, widths)))
        return "\n".join(lines) + "\n"


def run_exp1(ts_ms: Sequence[float] = EXP1_TS_MS, ta_ms: Sequence[float] = EXP1_TA_MS,
             methods: Sequence[str] = ("all", "phasor"), repeats: int = 5,
             out_dir: Optional[str] = None, measure_intervals: int = 3) -> Dict[str, Exp1Result]:
    """The bandwidth grid: `all` covers Ts <= Ta, `phasor` needs Ta/Ts >= 4."""
    results: Dict[str, Exp1Result] = {}
    for method in methods:
        rates: Dict[tuple, float] = {}
        for ts in ts_ms:
            for ta in ta_ms:
                if ta < ts:
                    continue  # not applicable: window shorter than a sample
                if method == "phasor" and ta / ts < 4:
                    continue  # phasor needs at least 4 samples per window
                cell = [
                    exp1_cell_rate(ts, ta, method, seed=rep, measure_intervals=measure_intervals)
                    for rep in range(repeats)
                ]
                rates[(ts, ta)] = statistics.mean(cell)
        results[method] = Exp1Result(
            method=method, ts_ms=tuple(ts_ms), ta_ms=tuple(ta_ms), rates=rates, repeats=repeats
        )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for method, result in results.items():
            (out / f"exp1_{method}.csv").write_text(result.to_csv(), encoding="utf-8")
            (out / f"exp1_{method}.txt").write_text(result.to_table(), encoding="utf-8")
    return results


@dataclass
class Exp2Result:
    m: int
    b_values: tuple
    repeats: int
    cells: Dict[tuple, dict]  # (mode, b) -> {median_ms, spread_ms, failures}
    crossover_b: Optional[int]  # smallest b where offload beats sequential

    def median(self, mode: str, b: int) -> float:
        return self.cells[(mode, b)]["median_ms"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["mode", "m", "b", "median_ms", "spread_ms", "failures", "repeats"])
        for (mode, b), cell in sorted(self.cells.items()):
            writer.writerow([mode, self.m, b, f"{cell['median_ms']:.3f}",
                             f"{cell['spread_ms']:.3f}", cell["failures"], self.repeats])
        return buf.getvalue()


def run_exp2(m: int = 4, b_values: Sequence[int] = EXP2_B,
             modes: Sequence[str] = EXP2_MODES, repeats: int = 5,
             out_dir: Optional[str] = None, seed: int = 7) -> Exp2Result:
    """Response-time grid; slot assignment: 1-slot edge for sequential and
    offload, 2-slot edge for local-parallel, 4-slot cloud peer for offload."""
    cells: Dict[tuple, dict] = {}
    for b in b_values:
        for mode in modes:
            edge_slots = 2 if mode == "local-parallel" else 1
            stats = measure_response(
                mode, m=m, b=b, repeats=repeats, edge_slots=edge_slots,
                cloud_slots=4, seed=seed,
            )
            cells[(mode, b)] = {
                "median_ms": stats.median_ms if stats.samples_ms else float("nan"),
                "spread_ms": stats.spread_ms,
                "failures": stats.failures,
            }
    crossover = None
    for b in sorted(b_values):
        if ("offload", b) in cells and ("sequential", b) in cells:
            if cells[("offload", b)]["median_ms"] < cells[("sequential", b)]["median_ms"]:
                crossover = b
                break
    result = Exp2Result(m=m, b_values=tuple(b_values), repeats=repeats,
                        cells=cells, crossover_b=crossover)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "exp2_response.csv").write_text(result.to_csv(), encoding="utf-8")
        (out / "exp2_summary.json").write_text(
            json.dumps({"m": m, "repeats": repeats, "crossover_b": crossover}, indent=2),
            encoding="utf-8",
        )
    return result


def run_exp3(points: int = 85, depth: int = 2, branch: int = 4,
             task_cost_ms: float = 20.0, workers: Sequence[int] = EXP3_WORKERS,
             repeats: int = 1, seed: int = 0, out_dir: Optional[str] = None,
             sim_overhead_s: float = SIM_OVERHEAD_S) -> dict:
    """Desk-scale measured strong scaling plus the simulated-cluster model."""
    config = ExplorationConfig(dims=3, depth=depth, branch=branch, points=points, seed=seed)
    oracle = StabilityOracle(3, seed=seed, cost_s=task_cost_ms / 1e3, cost_model="wait")
    measured = strong_scaling_run(config, oracle, worker_counts=workers, repeats=repeats)
    simulated = simulate_cluster(
        total_tasks=PAPER_TASKS, task_s=PAPER_TASK_S, slots_per_node=PAPER_SLOTS_PER_NODE,
        node_counts=PAPER_NODES, overhead_s=sim_overhead_s, waves=4,
    )
    metadata = {
        "measured": {
            "tasks": config.expected_tasks(),
            "task_cost_ms": task_cost_ms,
            "workers": list(workers),
            "repeats": repeats,
            "cost_model": "wait",
        },
        "simulated": {
            "tasks": PAPER_TASKS,
            "task_s": PAPER_TASK_S,
            "slots_per_node": PAPER_SLOTS_PER_NODE,
            "dispatch_overhead_s": sim_overhead_s,
            "waves": 4,
        },
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "exp3_measured.csv").write_text(scaling_csv(measured, repeats), encoding="utf-8")
        (out / "exp3_simulated.csv").write_text(scaling_csv(simulated, 1), encoding="utf-8")
        (out / "exp3_metadata.json").write_text(json.dumps(metadata, indent=2), encoding="utf-8")
    return {"measured": measured, "simulated": simulated, "metadata": metadata}


def _parse_floats(text: str) -> list:
    return [float(x) for x in text.split(",") if x]


def _parse_ints(text: str) -> list:
    return [int(x) for x in text.split(",") if x]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bench", description="Run the benchmark experiments")
    sub = parser.add_subparsers(dest="experiment", required=True)

    p1 = sub.add_parser("exp1", help="bandwidth vs sampling/aggregation intervals")
    p1.add_argument("--ts", default=",".join(str(x) for x in EXP1_TS_MS), help="sampling intervals, ms")
    p1.add_argument("--ta", default=",".join(str(x) for x in EXP1_TA_MS), help="aggregation intervals, ms")
    p1.add_argument("--methods", default="all,phasor")
    p1.add_argument("--repeats", type=int, default=5)
    p1.add_argument("--out", required=True)

    p2 = sub.add_parser("exp2", help="response time across execution modes")
    p2.add_argument("--m", type=int, default=4)
    p2.add_argument("--b", default=",".join(str(x) for x in EXP2_B))
    p2.add_argument("--modes", default=",".join(EXP2_MODES))
    p2.add_argument("--repeats", type=int, default=5)
    p2.add_argument("--out", required=True)

    p3 = sub.add_parser("exp3", help="strong scaling, measured and simulated")
    p3.add_argument("--points", type=int, default=85)
    p3.add_argument("--depth", type=int, default=2)
    p3.add_argument("--branch", type=int, default=4)
    p3.add_argument("--task-cost", type=float, default=20.0, help="ms")
    p3.add_argument("--workers", default=",".join(str(x) for x in EXP3_WORKERS))
    p3.add_argument("--repeats", type=int, default=1)
    p3.add_argument("--sim-overhead", type=float, default=SIM_OVERHEAD_S, help="seconds/task")
    p3.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    try:
        if args.experiment == "exp1":
            results = run_exp1(
                ts_ms=_parse_floats(args.ts), ta_ms=_parse_floats(args.ta),
                methods=args.methods.split(","), repeats=args.repeats, out_dir=args.out,
            )
            for result in results.values():
                print(result.to_table())
        elif args.experiment == "exp2":
            result = run_exp2(
                m=args.m, b_values=_parse_ints(args.b), modes=args.modes.split(","),
                repeats=args.repeats, out_dir=args.out,
            )
            print(result.to_csv())
            print(f"crossover block size (offload first beats sequential): {result.crossover_b}")
        else:
            out = run_exp3(
                points=args.points, depth=args.depth, branch=args.branch,
                task_cost_ms=args.task_cost, workers=_parse_ints(args.workers),
                repeats=args.repeats, sim_overhead_s=args.sim_overhead, out_dir=args.out,
            )
            print(scaling_csv(out["measured"], args.repeats))
            print(scaling_csv(out["simulated"], 1))
    except Exception as e:
        print(f"bench {args.experiment} failed: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
