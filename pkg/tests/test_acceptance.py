"""Acceptance suite: one test per primary criterion, at its stated tolerance.

Each test prints one PASS/FAIL line (run with `pytest tests/test_acceptance.py -v -s`
to see them all). Runtime bounds from the criteria are asserted alongside the
numerical checks.
"""

import hashlib
import json
import math
import threading
import time

import numpy as np
import pytest

from twinstack.aggregation import (
    ScalarPayload,
    aggregate,
    empirical_mse,
    loss_last,
    loss_phasor,
    phasor_dft,
    reconstruct,
)
from twinstack.bench import run_exp1, run_exp2, run_exp3
from twinstack.clock import VirtualClock, WallClock
from twinstack.cloud import CloudNode
from twinstack.config import FuncConfig, TriggerConfig, parse_config
from twinstack.datagen import ExplorationConfig, StabilityOracle, explore
from twinstack.edge import EdgeNode
from twinstack.functions import FunctionRegistry, TriggerEngine
from twinstack.messaging import Broker
from twinstack.model import Measurement, MeasurementWindow
from twinstack.offload import AgentRuntime, blocked_matmul_graph, matmul_matrices


def report(name: str, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE[{name}]: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


class TestAggregationLossStatistics:
    def test_loss_statistics(self):
        t0 = time.perf_counter()

        # Average aggregation over n=10 i.i.d. Gaussian windows, >= 10,000 windows
        rng = np.random.default_rng(100)
        windows = rng.standard_normal((10_000, 10))
        total = 0.0
        for row in windows:
            payload = ScalarPayload((float(row.mean()),), "average")
            total += empirical_mse(row, reconstruct(payload, 10, 1.0)).mse
        avg_mse = total / len(windows)

        # AR(1) rho=0.8, unit variance: one-step reconstruction with the
        # rho-weighted last value, >= 10,000 steps
        rho, steps = 0.8, 20_000
        noise = rng.standard_normal(steps) * math.sqrt(1 - rho * rho)
        x = np.empty(steps)
        x[0] = rng.standard_normal()
        for i in range(1, steps):
            x[i] = rho * x[i - 1] + noise[i]
        last_mse = float(np.mean((x[1:] - rho * x[:-1]) ** 2))
        predicted = loss_last(rho, 1.0)  # 0.36

        elapsed = time.perf_counter() - t0
        ok = (
            0.85 <= avg_mse <= 0.95
            and abs(last_mse - predicted) <= 0.1 * predicted
            and elapsed < 5.0
        )
        report(
            "aggregation-loss-statistics", ok,
            f"avg-mse={avg_mse:.4f} in [0.85,0.95]; last-mse={last_mse:.4f} "
            f"vs 0.36±10%; runtime={elapsed:.2f}s < 5s",
        )


class TestPhasorFidelity:
    def test_phasor_fidelity(self):
        t0 = time.perf_counter()

        # randomized on-bin sweep: A in [0.1, 1000], phi in (-pi, pi], k in [1, N/4]
        rng = np.random.default_rng(7)
        n = 128
        worst = 0.0
        for _ in range(300):
            amp = float(rng.uniform(0.1, 1000.0))
            phi = float(rng.uniform(-math.pi + 1e-9, math.pi))
            k = int(rng.integers(1, n // 4 + 1))
            x = amp * np.cos(2 * np.pi * k * np.arange(n) / n + phi)
            a_hat, phi_hat, f_hat = phasor_dft(x, 1.0)
            worst = max(worst, abs(a_hat - amp) / amp)
            delta = (phi_hat - phi + math.pi) % (2 * math.pi) - math.pi
            worst = max(worst, abs(delta))
            worst = max(worst, abs(f_hat - k / n))

        # reconstruction of a pure sinusoid
        x = 3.0 * np.cos(2 * np.pi * 5 * np.arange(n) / n + 0.4)
        w = MeasurementWindow(capacity=n)
        for i, v in enumerate(x):
            w.push(Measurement(i + 1, (float(v),)))
        payload = aggregate(w, "phasor", 1.0)
        reco_mse = empirical_mse(x, reconstruct(payload, n, 1.0)).mse

        # two equal on-bin tones lose exactly half the power
        two_tone = [
            math.cos(2 * math.pi * t / 64) + math.cos(2 * math.pi * 3 * t / 64)
            for t in range(64)
        ]
        tone_loss = loss_phasor(two_tone)

        elapsed = time.perf_counter() - t0
        ok = (
            worst <= 1e-9
            and reco_mse < 1e-12
            and abs(tone_loss - 0.5) <= 1e-9
            and elapsed < 2.0
        )
        report(
            "phasor-fidelity", ok,
            f"sweep-worst={worst:.2e} <= 1e-9; reconstruct-mse={reco_mse:.2e} < 1e-12; "
            f"two-tone-loss={tone_loss:.12f} = 0.5±1e-9; runtime={elapsed:.2f}s < 2s",
        )


class TestBandwidthStructure:
    def test_bandwidth_structure(self):
        t0 = time.perf_counter()
        results = run_exp1(repeats=5)
        phasor = results["phasor"]
        all_m = results["all"]

        # (a) phasor rows are Ts-independent: per-column deviation < 5%
        col_dev = 0.0
        for ta in phasor.ta_ms:
            column = [rate for (ts, t_a), rate in phasor.rates.items() if t_a == ta]
            if len(column) >= 2:
                col_dev = max(col_dev, (max(column) - min(column)) / min(column))

        # (b) each 10x Ta step divides phasor bytes/s by 10 +- 5%
        ratio_lo, ratio_hi = 10.0, 10.0
        for ts in phasor.ts_ms:
            row = sorted(
                (t_a, rate) for (t_s, t_a), rate in phasor.rates.items() if t_s == ts
            )
            for (ta1, r1), (ta2, r2) in zip(row, row[1:]):
                if ta2 == 10 * ta1:
                    ratio = r1 / r2
                    ratio_lo = min(ratio_lo, ratio)
                    ratio_hi = max(ratio_hi, ratio)

        # (c) diminishing returns along the Ts=1 ms row of `all`
        r1 = all_m.rate(1.0, 1.0)
        r10 = all_m.rate(1.0, 10.0)
        r100 = all_m.rate(1.0, 100.0)
        diminishing = (r1 / r10) > (r10 / r100)

        elapsed = time.perf_counter() - t0
        ok = (
            col_dev < 0.05
            and 9.5 <= ratio_lo
            and ratio_hi <= 10.5
            and diminishing
            and elapsed < 120.0
        )
        report(
            "bandwidth-structure", ok,
            f"phasor column deviation={col_dev:.3%} < 5%; 10x-step ratios in "
            f"[{ratio_lo:.2f},{ratio_hi:.2f}] within 10±5%; all-row ratios "
            f"{r1 / r10:.2f} > {r10 / r100:.2f} (diminishing); runtime={elapsed:.1f}s < 2min",
        )


class TestResponseTimeOrdering:
    def test_response_time_ordering(self):
        t0 = time.perf_counter()
        result = run_exp2(m=4, repeats=5)
        b_max = max(result.b_values)
        b_min = min(result.b_values)
        seq = result.median("sequential", b_max)
        lp = result.median("local-parallel", b_max)
        off = result.median("offload", b_max)

        ordering = off < lp < seq
        speedup_ok = seq >= 1.5 * lp
        crossoveretc = result.crossover_b is not None
        below_wins = result.median("sequential", b_min) < result.median("offload", b_min)

        elapsed = time.perf_counter() - t0
        ok = ordering and speedup_ok and crossoveretc and below_wins and elapsed < 600.0
        report(
            "response-time-ordering", ok,
            f"b={b_max}: offload={off:.1f}ms, local-parallel={lp:.1f}ms, "
            f"sequential={seq:.1f}ms; ordering(off<lp<seq)={ordering}; "
            f"lp-speedup={seq / lp:.2f} >= 1.5: {speedup_ok}; "
            f"crossover_b={result.crossover_b} (exists: {crossoveretc}); "
            f"sequential wins at b={b_min}: {below_wins}; runtime={elapsed:.0f}s < 10min",
        )


class TestDataGeneratorArithmetic:
    def test_task_count_and_determinism(self):
        t0 = time.perf_counter()
        config = ExplorationConfig(dims=3, depth=3, branch=4, points=170, seed=11)
        oracle = StabilityOracle(3, seed=11, cost_s=0.001, cost_model="wait")
        digests = {}
        counts = {}
        for workers in (1, 4, 8):
            dataset, metrics = explore(config, oracle, workers=workers)
            digests[workers] = hashlib.sha256(dataset.to_csv().encode("utf-8")).hexdigest()
            counts[workers] = metrics.task_count
        elapsed = time.perf_counter() - t0
        ok = (
            all(c == 14_450 for c in counts.values())
            and len(set(digests.values())) == 1
            and elapsed < 120.0
        )
        report(
            "data-generator-arithmetic", ok,
            f"task counts={sorted(set(counts.values()))} == [14450]; dataset digests "
            f"identical across workers {{1,4,8}}: {len(set(digests.values())) == 1}; "
            f"runtime={elapsed:.1f}s < 2min (1 ms task cost)",
        )


class TestStrongScaling:
    def test_desk_and_simulated_scaling(self):
        out = run_exp3(points=85, depth=2, branch=4, task_cost_ms=20.0,
                       workers=(1, 2, 4, 8), repeats=1)
        tasks = 85 * (1 + 4 + 16)
        measured = {r.workers: r for r in out["measured"]}
        speeds = [measured[w].speedup for w in (1, 2, 4, 8)]
        monotone = all(b > a for a, b in zip(speeds, speeds[1:]))
        eff8 = measured[8].efficiency

        simulated = {r.workers: r for r in out["simulated"]}
        sim_ok = simulated[16].efficiency >= 0.9 and simulated[64].efficiency < 0.8
        overhead_documented = out["metadata"]["simulated"]["dispatch_overhead_s"]

        ok = tasks >= 1700 and monotone and eff8 >= 0.8 and sim_ok
        report(
            "strong-scaling", ok,
            f"{tasks} tasks >= 1700 at 20ms; speedups={['%.2f' % s for s in speeds]} "
            f"monotone: {monotone}; efficiency(8)={eff8:.3f} >= 0.8; simulated "
            f"efficiency(16)={simulated[16].efficiency:.3f} >= 0.9, "
            f"efficiency(64)={simulated[64].efficiency:.3f} < 0.8 "
            f"(dispatch overhead {overhead_documented}s documented in metadata)",
        )


class TestTriggerSemantics:
    def test_trigger_semantics(self):
        t0 = time.perf_counter()

        # floor(N/k) dispatch law over randomized N, k
        rng = np.random.default_rng(3)
        law_ok = True
        for _ in range(40):
            n = int(rng.integers(0, 300))
            k = int(rng.integers(1, 17))
            registry = FunctionRegistry()
            calls = []
            registry.register("count", lambda s, a, p: calls.append(1))
            engine = TriggerEngine(
                sensor_views=lambda labels: {l: None for l in labels},
                actuator_views=lambda labels: {},
                registry=registry,
                clock=VirtualClock(),
            )
            engine.register(FuncConfig(
                label="f", lang="Python", exec_type="synchronous", method_name="count",
                sensors=(), trigger=TriggerConfig(kind="onRead", sensors=("V",), interval=k),
            ))
            for i in range(1, n + 1):
                engine.on_measurement("V", Measurement(i, (float(i),), "V"))
            law_ok = law_ok and len(calls) == n // k

        # onStart exactly once
        registry = FunctionRegistry()
        starts = []
        registry.register("boot", lambda s, a, p: starts.append(1))
        engine = TriggerEngine(
            sensor_views=lambda labels: {}, actuator_views=lambda labels: {},
            registry=registry, clock=VirtualClock(),
        )
        engine.register(FuncConfig(
            label="boot", lang="Python", exec_type="synchronous", method_name="boot",
            trigger=TriggerConfig(kind="onStart"),
        ))
        engine.tick(10**15)
        once_ok = starts == [1]

        # onFrequency fixed-rate count over a virtual hour, within +-1
        registry = FunctionRegistry()
        fires = []
        registry.register("tick", lambda s, a, p: fires.append(1))
        engine = TriggerEngine(
            sensor_views=lambda labels: {}, actuator_views=lambda labels: {},
            registry=registry, clock=VirtualClock(),
        )
        engine.register(FuncConfig(
            label="t", lang="Python", exec_type="synchronous", method_name="tick",
            trigger=TriggerConfig(kind="onFrequency", interval=250.0),
        ), now=0)
        hour_ns = 3_600_000_000_000
        t = 0
        while t < hour_ns:
            t = min(t + 777_000_000, hour_ns)
            engine.tick(t)
        expected = hour_ns // 250_000_000
        freq_ok = abs(len(fires) - expected) <= 1

        elapsed = time.perf_counter() - t0
        ok = law_ok and once_ok and freq_ok and elapsed < 10.0
        report(
            "trigger-semantics", ok,
            f"floor(N/k) law over 40 random (N,k): {law_ok}; onStart exactly once: "
            f"{once_ok}; onFrequency count={len(fires)} vs {expected}±1 over a virtual "
            f"hour: {freq_ok}; runtime={elapsed:.2f}s < 10s",
        )


class TestOffloadDeterminism:
    def test_checksums_and_oracle(self):
        t0 = time.perf_counter()
        m, b, seed = 4, 16, 23
        graph = blocked_matmul_graph(m, b, seed=seed)
        broker = Broker()
        cloud = AgentRuntime("cloud", 4, plane=broker).start()
        edge = AgentRuntime("edge", 2, plane=broker)
        checksums = {}
        product = None
        try:
            for mode in ("sequential", "local-parallel", "offload"):
                peers = [cloud.info()] if mode == "offload" else []
                out = edge.submit(graph, mode, peers=peers).result(timeout=60)
                checksums[mode] = out["assemble"]["checksum"]
                product = out["assemble"]["product"]
        finally:
            cloud.stop()

        a, bm = matmul_matrices(m, b, seed)
        n = m * b
        oracle = [[0.0] * n for _ in range(n)]
        for i in range(n):
            row = a[i]
            for j in range(n):
                acc = 0.0
                for t in range(n):
                    acc += row[t] * bm[t, j]
                oracle[i][j] = acc
        oracle_match = np.allclose(product, np.array(oracle), rtol=1e-10, atol=1e-12)

        elapsed = time.perf_counter() - t0
        identical = len(set(checksums.values())) == 1
        ok = identical and oracle_match and elapsed < 30.0
        report(
            "offload-determinism", ok,
            f"checksums identical across 3 modes: {identical}; matches naive "
            f"triple-loop oracle: {oracle_match}; runtime={elapsed:.1f}s < 30s",
        )


class TestEndToEndLoop:
    def test_overvoltage_to_actuation_and_alarm(self):
        t0 = time.perf_counter()
        broker = Broker()
        cloud_cfg = parse_config(json.dumps({
            "global-properties": {"type": "cloud", "label": "cloud1"},
            "alarms": [{
                "series": "edge1.Voltmeter Gen1.0",
                "above": 400,
                "severity": "critical",
                "message": "overvoltage detected",
            }],
        }))
        cloud = CloudNode(cloud_cfg, plane=broker).start()

        edge_cfg = parse_config(json.dumps({
            "global-properties": {"type": "edge", "label": "edge1", "window-size": 10,
                                  "heartbeat-interval": 200},
            "devices": [
                {"label": "Voltmeter Gen1", "driver": "synthetic-sine",
                 "properties": {"aggregate": "last", "sampling-interval": 50,
                                "aggregate-interval": 100, "amplitude": 401.0,
                                "frequency": 0.0}},
                {"label": "Three-Phase Switch Gen1", "driver": "switch",
                 "properties": {"aggregate": "last", "sampling-interval": 50,
                                "aggregate-interval": 100}},
            ],
            "funcs": [{
                "label": "VoltLimitation", "lang": "Python", "type": "synchronous",
                "method-name": "builtin.volt_limitation",
                "parameters": {"sensors": ["Voltmeter Gen1"],
                               "actuators": ["Three-Phase Switch Gen1"],
                               "other": {"threshold": 400}},
                "trigger": {"type": "onRead",
                            "parameters": {"trigger-sensor": ["Voltmeter Gen1"],
                                           "interval": 1}},
            }],
        }))
        node = EdgeNode(edge_cfg, plane=broker, clock=WallClock())
        runner = threading.Thread(target=node.run, args=(3.0,), daemon=True)
        start = time.perf_counter()
        runner.start()

        switch_open_at = None
        alarm_at = None
        deadline = start + 3.0
        try:
            while time.perf_counter() < deadline and (switch_open_at is None or alarm_at is None):
                if switch_open_at is None and node.devices["Three-Phase Switch Gen1"].driver.state == "open":
                    switch_open_at = time.perf_counter() - start
                if alarm_at is None and any(
                    r.severity == "critical" for r in cloud.alarms.list()
                ):
                    alarm_at = time.perf_counter() - start
                time.sleep(0.01)
        finally:
            runner.join(timeout=5)
            cloud.stop()

        elapsed = time.perf_counter() - t0
        within_budget = (
            switch_open_at is not None and alarm_at is not None
            and switch_open_at <= 1.0 and alarm_at <= 1.0
        )
        ok = within_budget and elapsed < 30.0
        report(
            "end-to-end-itot-loop", ok,
            f"switch open after {switch_open_at if switch_open_at is not None else 'never'}s, "
            f"critical cloud alarm after {alarm_at if alarm_at is not None else 'never'}s "
            f"(both <= 1s); runtime={elapsed:.1f}s < 30s",
        )
