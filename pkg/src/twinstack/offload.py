"""Agent-based asynchronous execution: task graphs, local worker slots, peer offload.

A task graph is a dependency-ordered set of tasks; each task names a registered
kind and carries plain inputs or references to predecessor outputs. Execution
modes: `sequential` (one local slot, topological order), `local-parallel`
(ready tasks fan out over the local slots) and `offload` (greedy: fill local
free slots, overflow to peer agents in descending advertised free slots, ties
broken by ascending node label).

Task envelopes cross nodes as messaging frames of type "task"/"task-result"
on agent.<NODE_ID>.tasks / agent.<NODE_ID>.results; local inputs pass by
value. Results are delivered through completion handles; for deterministic
task kinds all three modes produce identical result maps.
"""

from __future__ import annotations

import functools
import hashlib
import itertools
import queue as queue_mod
import statistics
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from . import messaging
from .clock import WallClock


class GraphCycleError(ValueError):
    """The task graph contains a dependency cycle."""


class UnknownTaskKindError(KeyError):
    """A task kind has no registered implementation."""


class PlanError(ValueError):
    """No agent can satisfy a task's core requirement."""


class GraphExecutionError(RuntimeError):
    """A task failed or a peer became unreachable; partial results attached."""

    def __init__(self, message: str, partial: Optional[dict] = None, failed: Optional[str] = None):
        super().__init__(message)
        self.partial = partial or {}
        self.failed = failed


@dataclass(frozen=True)
class Ref:
    """Reference to a predecessor task's output."""

    task_id: str


@dataclass(frozen=True)
class TaskSpec:
    id: str
    kind: str
    inputs: tuple = ()
    cores: int = 1

    def __post_init__(self):
        if self.cores < 1:
            raise ValueError(f"task {self.id!r}: cores must be >= 1")


@dataclass(frozen=True)
class AgentInfo:
    node: str
    total_slots: int
    free_slots: int

    def __post_init__(self):
        if not (0 <= self.free_slots <= self.total_slots):
            raise ValueError("free_slots must lie in [0, total_slots]")


class TaskGraph:
    """Acyclic set of TaskSpecs; edges combine the explicit pairs with the
    dependencies implied by Ref inputs."""

    def __init__(self, tasks: List[TaskSpec], edges: Optional[list] = None):
        self.tasks = list(tasks)
        ids = [t.id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise ValueError("task ids must be unique within a graph")
        self._by_id = {t.id: t for t in self.tasks}
        edge_set = set(edges or [])
        for task in self.tasks:
            for value in task.inputs:
                if isinstance(value, Ref):
                    edge_set.add((value.task_id, task.id))
        for producer, consumer in edge_set:
            if producer not in self._by_id or consumer not in self._by_id:
                raise ValueError(f"edge ({producer!r}, {consumer!r}) references unknown task")
        self.edges = sorted(edge_set)
        self.dependencies: Dict[str, set] = {t.id: set() for t in self.tasks}
        self.dependents: Dict[str, set] = {t.id: set() for t in self.tasks}
        for producer, consumer in self.edges:
            self.dependencies[consumer].add(producer)
            self.dependents[producer].add(consumer)
        self._check_acyclic()

    def __len__(self):
        return len(self.tasks)

    def task(self, task_id: str) -> TaskSpec:
        return self._by_id[task_id]

    def _check_acyclic(self) -> None:
        indegree = {tid: len(deps) for tid, deps in self.dependencies.items()}
        frontier = [tid for tid, d in indegree.items() if d == 0]
        seen = 0
        while frontier:
            tid = frontier.pop()
            seen += 1
            for dep in self.dependents[tid]:
                indegree[dep] -= 1
                if indegree[dep] == 0:
                    frontier.append(dep)
        if seen != len(self.tasks):
            raise GraphCycleError("task graph contains a cycle")

    def topological_order(self) -> list:
        """Deterministic topological order (graph listing order within waves)."""
        done: set = set()
        order: list = []
        remaining = list(self.tasks)
        while remaining:
            wave = [t for t in remaining if self.dependencies[t.id] <= done]
            order.extend(t.id for t in wave)
            done.update(t.id for t in wave)
            remaining = [t for t in remaining if t.id not in done]
        return order


# --- task kind registry -----------------------------------------------------

_TASK_KINDS: Dict[str, Callable] = {}


def register_task_kind(name: str, fn: Callable) -> None:
    _TASK_KINDS[name] = fn


def resolve_task_kind(name: str) -> Callable:
    try:
        return _TASK_KINDS[name]
    except KeyError:
        raise UnknownTaskKindError(name) from None


# --- planning ---------------------------------------------------------------


def plan(graph: TaskGraph, agents: List[AgentInfo], mode: str, local: Optional[str] = None) -> dict:
    """Static placement of every task.

    The first agent is the local node unless `local` names another. Offload
    placement simulates dependency waves: within a wave, local free slots fill
    first, overflow spills to peers ordered by descending advertised free
    slots (ties: ascending label); unplaced tasks roll into the next wave.
    """
    if not agents:
        raise PlanError("at least one agent is required")
    local = local or agents[0].node
    by_node = {a.node: a for a in agents}
    if local not in by_node:
        raise PlanError(f"local node {local!r} is not among the agents")

    for task in graph.tasks:
        if task.cores > max(a.free_slots for a in agents):
            raise PlanError(f"no agent can satisfy task {task.id!r} (cores={task.cores})")

    if mode in ("sequential", "local-parallel"):
        if any(t.cores > by_node[local].free_slots for t in graph.tasks):
            raise PlanError(f"local node cannot satisfy every task in mode {mode!r}")
        return {t.id: local for t in graph.tasks}
    if mode != "offload":
        raise ValueError(f"unknown execution mode {mode!r}")

    peers = sorted(
        (a for a in agents if a.node != local),
        key=lambda a: (-a.free_slots, a.node),
    )
    placement: dict = {}
    done: set = set()
    remaining = list(graph.tasks)
    while remaining:
        ready = [t for t in remaining if graph.dependencies[t.id] <= done]
        if not ready:
            raise GraphCycleError("task graph contains a cycle")
        capacity = {a.node: a.free_slots for a in agents}
        placed_now: list = []
        for task in ready:
            if capacity[local] >= task.cores:
                placement[task.id] = local
                capacity[local] -= task.cores
                placed_now.append(task)
                continue
            for peer in peers:
                if capacity[peer.node] >= task.cores:
                    placement[task.id] = peer.node
                    capacity[peer.node] -= task.cores
                    placed_now.append(task)
                    break
            # else: wave is full, task rolls over to the next wave
        done.update(t.id for t in placed_now)
        remaining = [t for t in remaining if t.id not in placement]
    return placement


# --- slot accounting --------------------------------------------------------


class SlotPool:
    def __init__(self, slots: int):
        if slots < 1:
            raise ValueError("slots must be >= 1")
        self.total = slots
        self._free = slots
        self._cond = threading.Condition()

    @property
    def free(self) -> int:
        with self._cond:
            return self._free

    def acquire(self, cores: int = 1, timeout: Optional[float] = None) -> bool:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while self._free < cores:
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    return False
                self._cond.wait(remaining)
            self._free -= cores
            return True

    def release(self, cores: int = 1) -> None:
        with self._cond:
            self._free += cores
            self._cond.notify_all()


# --- agent runtime ----------------------------------------------------------

_run_counter = itertools.count(1)


class GraphRun:
    """Completion handle for one submitted graph."""

    def __init__(self, run_id: str):
        self.run_id = run_id
        self._done = threading.Event()
        self._outputs: dict = {}
        self._error: Optional[GraphExecutionError] = None

    def _finish(self, outputs: dict, error: Optional[GraphExecutionError] = None) -> None:
        self._outputs = outputs
        self._error = error
        self._done.set()

    @property
    def done(self) -> bool:
        return self._done.is_set()

    def result(self, timeout: Optional[float] = None) -> dict:
        if not self._done.wait(timeout):
            raise TimeoutError(f"graph run {self.run_id} still executing")
        if self._error is not None:
            raise self._error
        return self._outputs


class AgentRuntime:
    """One node's executor: a pool of worker slots, optional peer service.

    With a message plane attached and `start()` called, the agent serves task
    frames addressed to it and replies with task-result frames. `submit` runs
    a graph from this node in any of the three modes.
    """

    def __init__(self, node: str, slots: int, plane=None, clock=None):
        self.node = node
        self.pool = SlotPool(slots)
        self.plane = plane
        self.clock = clock or WallClock()
        # persistent workers: per-task thread spawns would dominate small tasks
        self._workers = ThreadPoolExecutor(max_workers=slots, thread_name_prefix=f"{node}-slot")
        self._service_sub = None
        self._service_thread: Optional[threading.Thread] = None
        self._stopping = threading.Event()

    def info(self) -> AgentInfo:
        return AgentInfo(node=self.node, total_slots=self.pool.total, free_slots=self.pool.free)

    # --- peer service ---

    def start(self) -> "AgentRuntime":
        if self.plane is None:
            raise ValueError("agent service needs a message plane")
        self._service_sub = self.plane.subscribe(messaging.agent_task_key(self.node))
        self._service_thread = threading.Thread(target=self._serve, daemon=True)
        self._service_thread.start()
        return self

    def stop(self) -> None:
        self._stopping.set()
        if self._service_sub is not None:
            self._service_sub.close()
        self._workers.shutdown(wait=False)

    def _serve(self) -> None:
        while not self._stopping.is_set():
            frame = self._service_sub.get(timeout=0.1)
            if frame is None:
                continue
            try:
                self._workers.submit(self._serve_one, frame)
            except RuntimeError:  # shutting down
                return

    def _serve_one(self, frame) -> None:
        p = frame.payload
        reply_key = messaging.agent_result_key(p["reply_to"])
        cores = int(p.get("cores", 1))
        if cores > self.pool.total:
            body = {"run": p["run"], "task": p["task"], "ok": False,
                    "error": f"agent {self.node!r} has only {self.pool.total} slots"}
            self.plane.publish(reply_key, "task-result", body, ts=self.clock.now_ns())
            return
        self.pool.acquire(cores)
        try:
            fn = resolve_task_kind(p["kind"])
            inputs = messaging.decode_value(p["inputs"])
            output = fn(*inputs)
            body = {"run": p["run"], "task": p["task"], "ok": True,
                    "output": messaging.encode_value(output)}
        except Exception as e:
            body = {"run": p["run"], "task": p["task"], "ok": False,
                    "error": f"{type(e).__name__}: {e}"}
        finally:
            self.pool.release(cores)
        self.plane.publish(reply_key, "task-result", body, ts=self.clock.now_ns())

    # --- submission ---

    def submit(
        self,
        graph: TaskGraph,
        mode: str,
        peers: Optional[List[AgentInfo]] = None,
        timeout: Optional[float] = None,
    ) -> GraphRun:
        """Execute a graph from this node; returns a completion handle."""
        if mode not in ("sequential", "local-parallel", "offload"):
            raise ValueError(f"unknown execution mode {mode!r}")
        peers = list(peers or [])
        if mode != "offload":
            for task in graph.tasks:
                resolve_task_kind(task.kind)  # everything runs locally: fail fast
        run = GraphRun(f"{self.node}-{next(_run_counter)}")
        worker = threading.Thread(
            target=self._drive, args=(graph, mode, peers, run, timeout), daemon=True
        )
        worker.start()
        return run

    def _drive(self, graph, mode, peers, run, timeout) -> None:
        try:
            outputs = self._execute(graph, mode, peers, run, timeout)
            run._finish(outputs)
        except GraphExecutionError as e:
            run._finish(e.partial, e)
        except Exception as e:  # defensive: surface unexpected driver bugs
            run._finish({}, GraphExecutionError(str(e)))

    def _resolve_inputs(self, task: TaskSpec, outputs: dict) -> list:
        return [outputs[v.task_id] if isinstance(v, Ref) else v for v in task.inputs]

    def _execute(self, graph, mode, peers, run, timeout) -> dict:
        deadline = None if timeout is None else time.monotonic() + timeout
        outputs: dict = {}

        if mode == "sequential":
            for tid in graph.topological_order():
                task = graph.task(tid)
                fn = resolve_task_kind(task.kind)
                try:
                    outputs[tid] = fn(*self._resolve_inputs(task, outputs))
                except Exception as e:
                    raise GraphExecutionError(
                        f"task {tid!r} failed: {e}", partial=outputs, failed=tid
                    ) from e
            return outputs

        peer_free = {p.node: p.free_slots for p in peers}
        peer_order = [p.node for p in sorted(peers, key=lambda a: (-a.free_slots, a.node))]
        completions: "queue_mod.Queue" = queue_mod.Queue()
        result_sub = None
        if mode == "offload" and peer_order:
            if self.plane is None:
                raise GraphExecutionError("offload mode needs a message plane")
            result_sub = self.plane.subscribe(messaging.agent_result_key(self.node))
            pump = threading.Thread(
                target=self._pump_results, args=(result_sub, run.run_id, completions), daemon=True
            )
            pump.start()

        pending = {t.id for t in graph.tasks}
        ready = [t.id for t in graph.tasks if not graph.dependencies[t.id]]
        inflight: dict = {}  # task id -> ("local", cores) | (peer_node, cores)
        failure: Optional[GraphExecutionError] = None

        def run_local(task: TaskSpec, fn: Callable, inputs: list) -> None:
            try:
                completions.put((task.id, True, fn(*inputs)))
            except Exception as e:
                completions.put((task.id, False, f"{type(e).__name__}: {e}"))

        try:
            while pending:
                progressed = True
                while ready and progressed and failure is None:
                    progressed = False
                    for tid in list(ready):
                        task = graph.task(tid)
                        placed = None
                        if self.pool.acquire(task.cores, timeout=0):
                            try:
                                fn = resolve_task_kind(task.kind)
                            except UnknownTaskKindError:
                                self.pool.release(task.cores)
                                raise
                            placed = ("local", task.cores)
                            inputs = self._resolve_inputs(task, outputs)
                            self._workers.submit(run_local, task, fn, inputs)
                        elif mode == "offload":
                            for node in peer_order:
                                if peer_free.get(node, 0) >= task.cores:
                                    peer_free[node] -= task.cores
                                    placed = (node, task.cores)
                                    self._dispatch_remote(task, node, outputs, run.run_id)
                                    break
                        if placed is not None:
                            ready.remove(tid)
                            inflight[tid] = placed
                            progressed = True
                if not pending:
                    break
                remaining = None if deadline is None else max(0.0, deadline - time.monotonic())
                try:
                    tid, ok, value = completions.get(timeout=remaining if remaining is not None else 3600.0)
                except queue_mod.Empty:
                    raise GraphExecutionError(
                        "graph run timed out", partial=outputs
                    ) from None
                where, cores = inflight.pop(tid)
                if where == "local":
                    self.pool.release(cores)
                else:
                    peer_free[where] = peer_free.get(where, 0) + cores
                pending.discard(tid)
                if not ok:
                    failure = failure or GraphExecutionError(
                        f"task {tid!r} failed: {value}", partial=outputs, failed=tid
                    )
                    if not inflight:
                        raise failure
                    continue
                outputs[tid] = value
                if failure is None:
                    for dep in sorted(graph.dependents[tid]):
                        if dep in pending and dep not in inflight and dep not in ready:
                            if graph.dependencies[dep] <= set(outputs):
                                ready.append(dep)
                if failure is not None and not inflight:
                    raise failure
            if failure is not None:
                raise failure
            return outputs
        finally:
            if result_sub is not None:
                result_sub.close()

    def _dispatch_remote(self, task: TaskSpec, node: str, outputs: dict, run_id: str) -> None:
        inputs = self._resolve_inputs(task, outputs)
        body = {
            "run": run_id,
            "task": task.id,
            "kind": task.kind,
            "cores": task.cores,
            "inputs": messaging.encode_value(inputs),
            "reply_to": self.node,
        }
        delivered = self.plane.publish(
            messaging.agent_task_key(node), "task", body, ts=self.clock.now_ns()
        )
        if delivered == 0:
            raise GraphExecutionError(f"peer {node!r} unreachable", partial=dict(outputs), failed=task.id)

    @staticmethod
    def _pump_results(sub, run_id: str, completions: "queue_mod.Queue") -> None:
        while True:
            frame = sub.get(timeout=0.2)
            if frame is None:
                if sub._closed:
                    return
                continue
            p = frame.payload
            if p.get("run") != run_id:
                continue
            if p.get("ok"):
                completions.put((p["task"], True, messaging.decode_value(p["output"])))
            else:
                completions.put((p["task"], False, p.get("error", "remote failure")))


# --- blocked matmul workload -------------------------------------------------


@functools.lru_cache(maxsize=4)
def matmul_matrices(m: int, b: int, seed: int) -> tuple:
    """The seeded (m*b) x (m*b) input matrices A and B.

    Memoized per process: every node materializes the same deterministic
    matrices once, so task envelopes only need the seed, not megabytes of
    blocks. B is kept column-major so a column-block slice is a contiguous
    view and the block task is a single copy-free GEMM (releases the GIL).
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, m, b]))
    n = m * b
    a = rng.standard_normal((n, n))
    bm = np.asfortranarray(rng.standard_normal((n, n)))
    return a, bm


def matmul_block(seed: int, m: int, b: int, i: int, j: int) -> np.ndarray:
    """One result block C_ij = sum_k A_ik @ B_kj, as a single sliced GEMM."""
    a, bm = matmul_matrices(m, b, seed)
    return a[i * b : (i + 1) * b, :] @ bm[:, j * b : (j + 1) * b]


def matmul_assemble(m: int, b: int, *blocks: np.ndarray) -> dict:
    """Stitch the m*m row-major blocks into C and fingerprint the raw bytes."""
    rows = [np.hstack(blocks[i * m : (i + 1) * m]) for i in range(m)]
    product = np.vstack(rows)
    checksum = hashlib.blake2b(np.ascontiguousarray(product).tobytes()).hexdigest()
    return {"checksum": checksum, "product": product}


def blocked_matmul_graph(m: int, b: int, seed: int = 0) -> TaskGraph:
    """m^2 independent block tasks plus one assemble/checksum task."""
    if m < 1 or b < 1:
        raise ValueError("m and b must be >= 1")
    tasks = [
        TaskSpec(id=f"block-{i}-{j}", kind="matmul.block", inputs=(seed, m, b, i, j))
        for i in range(m)
        for j in range(m)
    ]
    refs = tuple(Ref(f"block-{i}-{j}") for i in range(m) for j in range(m))
    tasks.append(TaskSpec(id="assemble", kind="matmul.assemble", inputs=(m, b, *refs)))
    return TaskGraph(tasks)


register_task_kind("matmul.block", matmul_block)
register_task_kind("matmul.assemble", matmul_assemble)


# --- response-time harness ----------------------------------------------------


@dataclass
class ResponseStats:
    """Response-time samples for one (mode, m, b) cell."""

    mode: str
    m: int
    b: int
    samples_ms: list = field(default_factory=list)
    failures: int = 0

    @property
    def median_ms(self) -> float:
        return statistics.median(self.samples_ms)

    @property
    def spread_ms(self) -> float:
        if len(self.samples_ms) < 2:
            return 0.0
        return statistics.stdev(self.samples_ms)


def measure_response(
    mode: str,
    m: int,
    b: int,
    repeats: int = 5,
    edge_slots: int = 1,
    cloud_slots: int = 4,
    seed: int = 7,
    sample_timeout: float = 120.0,
) -> ResponseStats:
    """Wall-clock time from a sensor reading to the MsgAlert actuation it triggers.

    An in-process broker links a `edge` agent (edge_slots) with a `cloud` agent
    (cloud_slots). Every injected measurement triggers the blocked-matmul
    workflow in the requested mode; the alert actuator timestamps completion.
    BLAS pools are pinned to one thread per task so slot counts mean cores.
    """
    from threadpoolctl import threadpool_limits

    from .config import FuncConfig, TriggerConfig
    from .functions import FunctionRegistry, ThreadDispatcher, TriggerEngine
    from .model import Measurement

    broker = messaging.Broker()
    edge_agent = AgentRuntime("edge", edge_slots, plane=broker)
    cloud_agent = AgentRuntime("cloud", cloud_slots, plane=broker).start()
    graph = blocked_matmul_graph(m, b, seed)
    peers = [cloud_agent.info()] if mode == "offload" else []

    alert_times: list = []
    alert_event = threading.Event()

    class MsgAlert:
        label = "MsgAlert"

        def act(self, command):
            alert_times.append(time.perf_counter_ns())
            alert_event.set()

    class Feed:
        label = "trigger-sensor"

        def __init__(self):
            self._latest = None

        def latest(self):
            return self._latest

    feed = Feed()
    alert = MsgAlert()

    def workflow(sensors, actuators, params):
        run = edge_agent.submit(graph, mode, peers=peers, timeout=sample_timeout)
        result = run.result(timeout=sample_timeout)
        actuators["MsgAlert"].act({"checksum": result["assemble"]["checksum"]})

    registry = FunctionRegistry()
    registry.register("bench.matmul_alert", workflow)
    engine = TriggerEngine(
        sensor_views=lambda labels: {l: feed for l in labels},
        actuator_views=lambda labels: {l: alert for l in labels},
        registry=registry,
        async_dispatch=ThreadDispatcher(),
    )
    exec_type = "synchronous" if mode == "sequential" else "asynchronous"
    engine.register(
        FuncConfig(
            label="matmul-alert",
            lang="Python",
            exec_type=exec_type,
            method_name="bench.matmul_alert",
            sensors=("trigger-sensor",),
            actuators=("MsgAlert",),
            trigger=TriggerConfig(kind="onRead", sensors=("trigger-sensor",), interval=1),
        )
    )

    stats = ResponseStats(mode=mode, m=m, b=b)
    try:
        with threadpool_limits(limits=1):
            # warm the BLAS/task path once so the first sample is not an outlier
            edge_agent.submit(graph, "sequential").result(timeout=sample_timeout)
            for rep in range(repeats):
                alert_event.clear()
                feed._latest = Measurement(time.time_ns(), (float(rep),), "trigger-sensor")
                t0 = time.perf_counter_ns()
                engine.on_measurement("trigger-sensor", feed._latest)
                if not alert_event.wait(sample_timeout):
                    stats.failures += 1
                    continue
                stats.samples_ms.append((alert_times[-1] - t0) / 1e6)
    finally:
        cloud_agent.stop()
    return stats
