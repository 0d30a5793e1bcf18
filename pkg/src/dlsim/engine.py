"""Event-driven simulation of one training iteration.

Every device runs the same program, so one device is simulated and the
fabric-wide quantities (host bandwidth, link loads) are scaled by symmetry.

Three FIFO resources execute tasks:

* ``compute``: layer forward/backward and recompute work, strictly in program order
* ``fabric``: collectives, one at a time
* ``migration``: one offload and one prefetch queue per device; when both are
  busy they split the migration path's bandwidth

A task enters its resource queue once every dependency has completed.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

from .collectives import CollectiveKind, CollectiveRequest, collective_time, usable_rings
from .device import DeviceSpec, Phase, layer_compute_time
from .fabric import Design, FabricParams, Topology, build_design, parse_design
from .vmem import Directive, MigrationPlan, PlanOptions, migration_time, plan_migration
from .workload import (
    NetworkDAG,
    Parallelism,
    TrainingConfig,
    layer_footprint,
    shard_footprint,
)


class SimulationError(RuntimeError):
    def __init__(self, message: str, trace: str = ""):
        super().__init__(message)
        self.trace = trace


class Category(str, Enum):
    COMPUTE = "compute"
    SYNC = "sync"
    MIGRATION = "migration"


_RESOURCE = {Category.COMPUTE: "compute", Category.SYNC: "fabric", Category.MIGRATION: "migration"}
_EVENT_ORDER = {
    "computeEnd": 0,
    "collectiveEnd": 1,
    "migrationEnd": 2,
    "computeStart": 3,
    "collectiveStart": 4,
    "migrationStart": 5,
    "stall": 6,
}
_START = {Category.COMPUTE: "computeStart", Category.SYNC: "collectiveStart", Category.MIGRATION: "migrationStart"}
_END = {Category.COMPUTE: "computeEnd", Category.SYNC: "collectiveEnd", Category.MIGRATION: "migrationEnd"}


@dataclass(frozen=True)
class SimEvent:
    time: float
    kind: str
    subject: str

    def sort_key(self):
        return (self.time, _EVENT_ORDER[self.kind], self.subject)


@dataclass
class Task:
    id: int
    name: str
    category: Category
    duration: float
    deps: list[int] = field(default_factory=list)
    nbytes: int = 0
    direction: str = ""
    links: tuple = ()
    priority: int = 0
    start: float = math.nan
    end: float = math.nan


@dataclass(frozen=True)
class BreakdownResult:
    total_seconds: float
    exposed_compute_seconds: float
    exposed_sync_seconds: float
    exposed_migration_seconds: float
    compute_busy_seconds: float
    sync_busy_seconds: float
    migration_busy_seconds: float
    host_bandwidth_avg: float
    host_bandwidth_peak: float
    per_link_utilization: dict
    bytes_moved: dict
    events: tuple = ()

    @property
    def exposed_sum(self) -> float:
        return self.exposed_compute_seconds + self.exposed_sync_seconds + self.exposed_migration_seconds

    @property
    def max_link_utilization(self) -> float:
        return max(self.per_link_utilization.values(), default=0.0)

    def normalized(self) -> dict:
        tot = self.total_seconds or 1.0
        return {
            "compute": self.exposed_compute_seconds / tot,
            "sync": self.exposed_sync_seconds / tot,
            "migration": self.exposed_migration_seconds / tot,
        }


class _Graph:
    def __init__(self):
        self.tasks: list[Task] = []

    def add(self, name: str, category: Category, duration: float, deps: Iterable[int] = (), **kw) -> int:
        tid = len(self.tasks)
        self.tasks.append(Task(tid, name, category, max(0.0, duration), [d for d in deps if d is not None], **kw))
        return tid


def _run(graph: _Graph, solo_rate: float = 1.0, duplex_rate: float = 1.0) -> list[SimEvent]:
    """Discrete-event execution; each queue serves ready tasks by (priority, readiness).

    ``compute`` and ``fabric`` serve one task at a time for its fixed duration.
    Migration has one queue per direction; the two heads share the path,
    moving at ``solo_rate`` alone and ``duplex_rate`` each when both run.
    A migration task's work is its duration at the solo rate, in bytes.
    """
    tasks = graph.tasks
    waiting = [len(set(t.deps)) for t in tasks]
    dependents: dict[int, list[int]] = {}
    for t in tasks:
        for d in set(t.deps):
            dependents.setdefault(d, []).append(t.id)
    serial = ("compute", "fabric")
    channels = ("offload", "prefetch")
    queues: dict[str, list[tuple[int, float, int]]] = {name: [] for name in serial + channels}
    running: dict[str, int | None] = {name: None for name in serial + channels}
    remaining: dict[int, float] = {}
    completions: list[tuple[float, int]] = []
    events: list[SimEvent] = []
    done = 0
    now = 0.0

    def queue_of(task: Task) -> str:
        return task.direction if task.category is Category.MIGRATION else _RESOURCE[task.category]

    def ready(tid: int, at: float):
        heapq.heappush(queues[queue_of(tasks[tid])], (tasks[tid].priority, at, tid))

    def start(name: str):
        _, _, tid = heapq.heappop(queues[name])
        task = tasks[tid]
        task.start = now
        running[name] = tid
        events.append(SimEvent(now, _START[task.category], task.name))
        if name in serial:
            task.end = now + task.duration
            heapq.heappush(completions, (task.end, tid))
        else:
            remaining[tid] = task.duration * solo_rate

    def dispatch():
        for name in serial + channels:
            if running[name] is None and queues[name]:
                start(name)

    def rate() -> float:
        active = sum(running[c] is not None for c in channels)
        return duplex_rate if active == 2 else solo_rate

    def next_channel() -> tuple[float, int] | None:
        best = None
        r = rate()
        for c in channels:
            tid = running[c]
            if tid is not None:
                cand = (now + remaining[tid] / r, tid)
                if best is None or cand < best:
                    best = cand
        return best

    def finish(tid: int):
        nonlocal done
        task = tasks[tid]
        task.end = now
        running[queue_of(task)] = None
        events.append(SimEvent(now, _END[task.category], task.name))
        done += 1
        for nxt in dependents.get(tid, ()):
            waiting[nxt] -= 1
            if waiting[nxt] == 0:
                ready(nxt, now)

    for t in tasks:
        if waiting[t.id] == 0:
            ready(t.id, 0.0)
    dispatch()
    while True:
        serial_next = completions[0] if completions else None
        chan_next = next_channel()
        if serial_next is None and chan_next is None:
            break
        if chan_next is not None and (serial_next is None or chan_next < serial_next):
            at, tid = chan_next
            is_channel = True
        else:
            at, tid = serial_next
            is_channel = False
        r = rate()
        for c in channels:
            other = running[c]
            if other is not None:
                remaining[other] = max(0.0, remaining[other] - (at - now) * r)
        now = at
        if is_channel:
            remaining[tid] = 0.0
        else:
            heapq.heappop(completions)
        finish(tid)
        dispatch()
    if done != len(tasks):
        stuck = [t.name for t in tasks if math.isnan(t.end)][:10]
        trace = "\n".join(f"{e.time!r} {e.kind} {e.subject}" for e in sorted(events, key=SimEvent.sort_key)[-20:])
        raise SimulationError(f"deadlock: {len(tasks) - done} tasks never became runnable, e.g. {stuck}", trace)
    events.sort(key=SimEvent.sort_key)
    return events


def _union(intervals: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    merged: list[list[float]] = []
    for lo, hi in sorted(i for i in intervals if i[1] > i[0]):
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(a, b) for a, b in merged]


def _measure(intervals: Sequence[tuple[float, float]]) -> float:
    return sum(b - a for a, b in intervals)


def _minus(a: list[tuple[float, float]], b: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Set difference of two sorted disjoint interval lists."""
    out = []
    j = 0
    for lo, hi in a:
        cur = lo
        while j < len(b) and b[j][1] <= cur:
            j += 1
        k = j
        while k < len(b) and b[k][0] < hi:
            if b[k][0] > cur:
                out.append((cur, b[k][0]))
            cur = max(cur, b[k][1])
            k += 1
        if cur < hi:
            out.append((cur, hi))
    return out


def attribute(tasks: Sequence[Task], total: float) -> tuple[float, float, float]:
    """Exposed time per category with priority compute > sync > migration.

    Instants where nothing runs (there should be none) go to the category
    of the next task to start, so the three parts always cover ``total``.
    """
    spans = {c: _union([(t.start, t.end) for t in tasks if t.category is c]) for c in Category}
    comp = spans[Category.COMPUTE]
    sync = _minus(spans[Category.SYNC], comp)
    covered = _union(comp + spans[Category.SYNC])
    mig = _minus(spans[Category.MIGRATION], covered)
    exposed = {Category.COMPUTE: _measure(comp), Category.SYNC: _measure(sync), Category.MIGRATION: _measure(mig)}
    idle = _minus([(0.0, total)], _union(covered + spans[Category.MIGRATION]))
    starts = sorted((t.start, t.id, t.category) for t in tasks)
    for lo, hi in idle:
        nxt = next((c for s, _, c in starts if s >= hi), Category.COMPUTE)
        exposed[nxt] += hi - lo
    return exposed[Category.COMPUTE], exposed[Category.SYNC], exposed[Category.MIGRATION]


@dataclass(frozen=True)
class EngineOptions:
    message_bytes: int = 4096
    record_events: bool = False
    # False: offloads and prefetches share the path's effective bandwidth.
    # True: each direction gets its own link capacity and only the backing
    # store's bandwidth is shared (a sensitivity setting, not the default).
    duplex_migration: bool = False


def _allreduce(t: Topology, nbytes: int, opts: EngineOptions):
    parts = tuple(t.devices)
    return collective_time(t, CollectiveRequest(CollectiveKind.ALL_REDUCE, parts, int(nbytes), opts.message_bytes))


def _allgather(t: Topology, nbytes: int, opts: EngineOptions):
    parts = tuple(t.devices)
    return collective_time(t, CollectiveRequest(CollectiveKind.ALL_GATHER, parts, int(nbytes), opts.message_bytes))


def _ring_link_loads(t: Topology, per_ring_bytes: Sequence[int], steps: int, loads: dict):
    """Bytes each ring link carries (in ring direction) for one collective."""
    p = t.device_count
    rings = usable_rings(t, tuple(t.devices))
    for sched, nbytes in zip(rings, per_ring_bytes):
        per_link = steps * nbytes / p
        for path in sched.paths:
            for lid in path:
                loads[(lid, "ring")] = loads.get((lid, "ring"), 0.0) + per_link


def simulate_iteration(
    dag: NetworkDAG,
    cfg: TrainingConfig,
    t: Topology,
    plan: MigrationPlan | None = None,
    options: EngineOptions = EngineOptions(),
) -> BreakdownResult:
    if cfg.device_count != t.device_count:
        raise SimulationError(f"config has {cfg.device_count} devices, topology {t.design.value} has {t.device_count}")
    if plan is None:
        plan = plan_migration(dag, cfg, t)
    n = len(dag.layers)
    spec = t.device_spec
    mp = cfg.parallelism is Parallelism.MODEL
    path = None if t.unbounded_local_memory else t.migration_path(0)
    g = _Graph()
    link_loads: dict = {}

    # gates: tasks that must finish before the compute at a timeline position starts
    gates: dict[int, list[int]] = {}
    offload_task: dict[str, int] = {}
    prefetch_issue: dict[int, list] = {}
    recompute_at: dict[int, list] = {}
    for tp in plan.tensors:
        if tp.directive is Directive.OFFLOAD:
            prefetch_issue.setdefault(tp.prefetch_issue, []).append(tp)
        elif tp.directive is Directive.RECOMPUTE:
            recompute_at.setdefault(tp.need_from, []).append(tp)
    offload_after: dict[int, list] = {}
    for tp in plan.tensors:
        if tp.directive is Directive.OFFLOAD:
            offload_after.setdefault(tp.offload_after, []).append(tp)

    fwd_gather: dict[int, int] = {}  # producer -> all-gather task (model parallel)
    bwd_reduce: dict[int, list[int]] = {}  # layer -> dX all-reduce tasks its backward must wait for
    preds = {layer.id: layer.predecessors for layer in dag.layers}
    prev = None

    def collective(name: str, kind: str, nbytes: int, deps) -> int | None:
        if nbytes <= 0:
            return None
        cost = _allreduce(t, nbytes, options) if kind == "allReduce" else _allgather(t, nbytes, options)
        _ring_link_loads(t, cost.per_ring_bytes, cost.steps, link_loads)
        return g.add(name, Category.SYNC, cost.seconds, deps, nbytes=nbytes)

    prefetch_task: dict[str, int] = {}
    for pos in range(2 * n):
        forward = pos < n
        layer = dag.layers[pos if forward else 2 * n - 1 - pos]
        # prefetches issued as this position becomes next in line
        for tp in sorted(prefetch_issue.get(pos, ()), key=lambda x: (x.need_from, x.tensor)):
            tid = g.add(
                f"prefetch:{tp.tensor}",
                Category.MIGRATION,
                migration_time(tp.nbytes, path),
                [offload_task[tp.tensor], prev],
                nbytes=tp.nbytes,
                direction="prefetch",
            )
            prefetch_task[tp.tensor] = tid
            gates.setdefault(tp.need_from, []).append(tid)
        gate = gates.get(pos, [])
        for tp in recompute_at.get(pos, ()):
            fp = shard_footprint(dag.layers[tp.producer], cfg)
            prev = g.add(
                f"recompute:{tp.tensor}",
                Category.COMPUTE,
                layer_compute_time(fp, spec, Phase.FORWARD).seconds,
                [prev] + gate,
            )
        fp = shard_footprint(layer, cfg)
        phase = Phase.FORWARD if forward else Phase.BACKWARD
        deps = [prev] + gate
        if forward:
            deps += [fwd_gather[p] for p in layer.predecessors if p in fwd_gather]
        else:
            deps += bwd_reduce.get(layer.id, [])
        cost = layer_compute_time(fp, spec, phase)
        tag = f"{'fwd' if forward else 'bwd'}:L{layer.id}"
        if mp and layer.kind.recurrent:
            # each timestep needs the gathered hidden state (forward) or the
            # reduced hidden/input gradient (backward) before the next one
            steps = layer.timesteps
            full = layer_footprint(layer, cfg.batch_size)
            per_step = (full.feature_out_bytes if forward else full.feature_in_bytes + full.feature_out_bytes) // steps
            for s in range(steps):
                prev = g.add(f"{tag}:t{s}", Category.COMPUTE, cost.seconds / steps, deps)
                sync = collective(
                    f"{'gather' if forward else 'reduce'}:L{layer.id}:t{s}",
                    "allGather" if forward else "allReduce",
                    per_step,
                    [prev],
                )
                deps = [prev, sync]
            prev = g.add(f"{tag}:done", Category.COMPUTE, 0.0, deps)
        else:
            prev = g.add(tag, Category.COMPUTE, cost.seconds, deps)
            if mp and layer.kind.gemm and forward and dag.successors()[layer.id]:
                full = layer_footprint(layer, cfg.batch_size)
                tid = collective(f"gather:L{layer.id}", "allGather", full.feature_out_bytes, [prev])
                if tid is not None:
                    fwd_gather[layer.id] = tid
            if mp and layer.kind.gemm and not forward and preds[layer.id]:
                full = layer_footprint(layer, cfg.batch_size)
                tid = collective(f"reduce-dX:L{layer.id}", "allReduce", full.feature_in_bytes, [prev])
                if tid is not None:
                    for p in preds[layer.id]:
                        bwd_reduce.setdefault(p, []).append(tid)
        if not forward and not mp and layer.kind.weighted:
            collective(f"reduce-dW:L{layer.id}", "allReduce", fp.weight_bytes, [prev])
        if forward:
            for tp in sorted(offload_after.get(layer.id, ()), key=lambda x: x.tensor):
                # among ready offloads, the copy needed back soonest goes first
                tid = g.add(
                    f"offload:{tp.tensor}",
                    Category.MIGRATION,
                    migration_time(tp.nbytes, path),
                    [prev],
                    nbytes=tp.nbytes,
                    direction="offload",
                    priority=tp.need_from,
                )
                offload_task[tp.tensor] = tid
                if tp.offload_deadline < tp.prefetch_issue:
                    gates.setdefault(tp.offload_deadline, []).append(tid)

    # prefetches leave strictly in order of need, whatever order they became issuable in
    chain = sorted(
        (tp for tp in plan.tensors if tp.directive is Directive.OFFLOAD), key=lambda x: (x.need_from, x.tensor)
    )
    for before, after in zip(chain, chain[1:]):
        g.tasks[prefetch_task[after.tensor]].deps.append(prefetch_task[before.tensor])

    if path is None:
        events = _run(g)
    else:
        duplex = path.duplex_bandwidth() if options.duplex_migration else path.bandwidth() / 2
        events = _run(g, path.bandwidth(), duplex)
    total = max((task.end for task in g.tasks), default=0.0)
    c, s, m = attribute(g.tasks, total)

    offloaded = sum(task.nbytes for task in g.tasks if task.direction == "offload")
    prefetched = sum(task.nbytes for task in g.tasks if task.direction == "prefetch")
    devices = t.device_count
    host_avg = host_peak = 0.0
    if path is not None and path.host_backed and total > 0:
        host_avg = devices * (offloaded + prefetched) / total
        off = _union([(x.start, x.end) for x in g.tasks if x.direction == "offload"])
        pre = _union([(x.start, x.end) for x in g.tasks if x.direction == "prefetch"])
        both = _minus(off, _minus(off, pre))
        concurrent = 2 * duplex if _measure(both) > 0 else 0.0
        per_device = max(path.bandwidth(), concurrent)
        host_peak = devices * per_device if (offloaded + prefetched) else 0.0
    if path is not None:
        for task in g.tasks:
            if task.category is Category.MIGRATION and task.nbytes:
                share = task.nbytes / len(path.active_segments())
                for seg in path.active_segments():
                    for lid in seg.links:
                        key = (lid, task.direction)
                        link_loads[key] = link_loads.get(key, 0.0) + share / len(seg.links)
    util: dict = {}
    if total > 0:
        for (lid, direction), nbytes in sorted(link_loads.items()):
            bw = t.links[lid].bandwidth
            frac = nbytes / total / bw
            # every device runs the same program, so each device's own path carries the same load
            util[f"L{lid}:{direction}"] = frac
    busy = {cat: _measure(_union([(x.start, x.end) for x in g.tasks if x.category is cat])) for cat in Category}
    if path is not None and path.host_backed:
        off_key, pre_key = "localToHost", "hostToLocal"
    else:
        off_key, pre_key = "localToRemote", "remoteToLocal"
    return BreakdownResult(
        total_seconds=total,
        exposed_compute_seconds=c,
        exposed_sync_seconds=s,
        exposed_migration_seconds=m,
        compute_busy_seconds=busy[Category.COMPUTE],
        sync_busy_seconds=busy[Category.SYNC],
        migration_busy_seconds=busy[Category.MIGRATION],
        host_bandwidth_avg=host_avg,
        host_bandwidth_peak=host_peak,
        per_link_utilization=util,
        bytes_moved={off_key: devices * offloaded, pre_key: devices * prefetched},
        events=tuple(events) if options.record_events else (),
    )


def dump_events(result: BreakdownResult) -> str:
    return "".join(f"{e.time!r}\t{e.kind}\t{e.subject}\n" for e in result.events)


# -- experiment helpers -----------------------------------------------------------


@dataclass(frozen=True)
class RunKey:
    workload: str
    design: str
    parallelism: str
    point: str = ""


@dataclass
class RunOutcome:
    key: RunKey
    result: BreakdownResult | None = None
    error: str = ""


def run_design(
    dag: NetworkDAG,
    cfg: TrainingConfig,
    design: Design | str | Topology,
    *,
    plan_options: PlanOptions = PlanOptions(),
    engine_options: EngineOptions = EngineOptions(),
) -> BreakdownResult:
    t = design if isinstance(design, Topology) else build_design(parse_design(design), cfg.device_count)
    plan = plan_migration(dag, cfg, t, options=plan_options)
    return simulate_iteration(dag, cfg, t, plan, engine_options)


def harmonic_mean(values: Sequence[float]) -> float:
    values = list(values)
    if not values:
        return math.nan
    if any(v <= 0 for v in values):
        raise ValueError("harmonic mean needs positive values")
    return len(values) / sum(1.0 / v for v in values)


def compare_designs(
    dags: Sequence[NetworkDAG], cfg: TrainingConfig, designs: Sequence[Design | str], baseline: Design | str = Design.DC
) -> dict:
    """Speedup of every design over ``baseline`` per workload, plus the harmonic mean."""
    baseline = parse_design(baseline)
    designs = [parse_design(d) for d in designs]
    table: dict = {"speedup": {}, "harmonic_mean": {}}
    totals = {}
    for dag in dags:
        for d in dict.fromkeys([baseline, *designs]):
            totals[(dag.name, d)] = run_design(dag, cfg, d).total_seconds
    for d in designs:
        per = {dag.name: totals[(dag.name, baseline)] / totals[(dag.name, d)] for dag in dags}
        table["speedup"][d.value] = per
        table["harmonic_mean"][d.value] = harmonic_mean(per.values())
    return table


SWEEP_PARAMETERS = ("batchSize", "deviceCount", "linkBandwidth", "pcieGen")


def pcie_gen_bandwidth(gen: int) -> float:
    """Per-device PCIe bandwidth for a generation, doubling from 16 GB/s at gen3."""
    if gen < 1:
        raise ValueError(f"PCIe generation must be >= 1, got {gen}")
    return 16e9 * 2.0 ** (gen - 3)


def apply_sweep_point(cfg: TrainingConfig, spec, params, parameter: str, value):
    """Return ``(cfg, spec, params)`` with one sweep parameter set to ``value``."""
    if parameter == "batchSize":
        return replace(cfg, batch_size=int(value)), spec, params
    if parameter == "deviceCount":
        return replace(cfg, device_count=int(value)), spec, params
    if parameter == "linkBandwidth":
        return cfg, replace(spec, link_bandwidth=float(value)), params
    if parameter == "pcieGen":
        return cfg, spec, replace(params, pcie_bandwidth=pcie_gen_bandwidth(int(value)))
    raise ValueError(f"unknown sweep parameter {parameter!r}; expected one of {SWEEP_PARAMETERS}")


def sweep(
    dag: NetworkDAG, cfg: TrainingConfig, design: Design | str, parameter: str, values: Sequence
) -> list[RunOutcome]:
    """One result per value; a failing point records its error and the sweep carries on."""
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"unknown sweep parameter {parameter!r}; expected one of {SWEEP_PARAMETERS}")
    design = parse_design(design)
    out = []
    for value in values:
        key = RunKey(dag.name, design.value, cfg.parallelism.value, f"{parameter}={value}")
        try:
            point_cfg, spec, params = apply_sweep_point(cfg, DeviceSpec(), FabricParams(), parameter, value)
            t = build_design(design, point_cfg.device_count, spec, params)
            out.append(RunOutcome(key, run_design(dag, point_cfg, t)))
        except (ValueError, RuntimeError) as exc:
            out.append(RunOutcome(key, None, f"{type(exc).__name__}: {exc}"))
    return out
