"""Memory virtualization: remote address space, page placement and the
offload/prefetch/recompute planner.

Planning works on a unified timeline of ``2n`` positions for an ``n``-layer
network: forward layer ``i`` runs at position ``i`` and its backward at
``2n - 1 - i``. Residency is tracked per position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

from .device import DeviceSpec, Phase, layer_compute_time
from .fabric import MigrationPath, NodeKind, Policy, Topology
from .workload import (
    LayerKind,
    NetworkDAG,
    TensorReuse,
    TrainingConfig,
    backward_position,
    reuse_schedule,
    shard_footprint,
    tensor_bytes,
)

PAGE_BYTES = 2 * 1024 * 1024
PHYSICAL_ADDRESS_LIMIT = 2**47
RECOMPUTE_KINDS = frozenset({LayerKind.ACTIVATION, LayerKind.POOLING, LayerKind.NORMALIZATION})


class VmemError(ValueError):
    pass


class InfeasibleWorkloadError(VmemError):
    pass


class CopyDirection(str, Enum):
    LOCAL_TO_REMOTE = "localToRemote"
    REMOTE_TO_LOCAL = "remoteToLocal"
    HOST_TO_LOCAL = "hostToLocal"
    LOCAL_TO_HOST = "localToHost"


# -- address space and page placement -----------------------------------------


@dataclass(frozen=True)
class RemoteRegion:
    source: str
    side: str
    base: int
    capacity: int

    @property
    def end(self) -> int:
        return self.base + self.capacity


@dataclass(frozen=True)
class AddressSpaceMap:
    local_capacity: int
    remote_regions: tuple[RemoteRegion, ...]
    page_bytes: int = PAGE_BYTES

    def __post_init__(self):
        if self.page_bytes <= 0:
            raise VmemError("pageBytes must be positive")
        cursor = self.local_capacity
        for region in self.remote_regions:
            if region.base != cursor or region.capacity <= 0:
                raise VmemError(f"remote region {region.source} is not contiguous above {cursor}")
            cursor = region.end
        if cursor > PHYSICAL_ADDRESS_LIMIT:
            raise VmemError(f"address space of {cursor} bytes exceeds 47-bit physical addressing")

    @property
    def total_bytes(self) -> int:
        return self.remote_regions[-1].end if self.remote_regions else self.local_capacity

    def region_pages(self, index: int) -> int:
        return self.remote_regions[index].capacity // self.page_bytes


def address_space(
    t: Topology, device: int = 0, *, page_bytes: int = PAGE_BYTES, host_capacity_bytes: int = 512 * 10**9
) -> AddressSpaceMap:
    """Local region followed by the device's remote halves (or its host share)."""
    if t.unbounded_local_memory:
        raise VmemError("unbounded local memory has no remote address space")
    path = t.migration_path(device)
    local = int(t.local_capacity_bytes)
    regions = []
    cursor = local
    if path is not None:
        for seg in path.segments:
            if seg.target.kind is NodeKind.HOST:
                cap = host_capacity_bytes
            else:
                cap = int(t.memory_spec.group_capacity_bytes)
            regions.append(RemoteRegion(str(seg.target), seg.side, cursor, cap))
            cursor += cap
    return AddressSpaceMap(local, tuple(regions), page_bytes)


@dataclass(frozen=True)
class PagePlacement:
    """``pages[i]`` is ``(region index, physical address)`` of the i-th page."""

    pages: tuple[tuple[int, int], ...]

    def count(self, region: int) -> int:
        return sum(1 for r, _ in self.pages if r == region)


class RemoteAllocator:
    """Bump allocator over the remote regions of one ``AddressSpaceMap``."""

    def __init__(self, amap: AddressSpaceMap):
        if not amap.remote_regions:
            raise VmemError("address space has no remote region")
        self.map = amap
        self.used = [0] * len(amap.remote_regions)

    def _take(self, region: int, n: int) -> list[tuple[int, int]]:
        reg = self.map.remote_regions[region]
        free = self.map.region_pages(region) - self.used[region]
        if n > free:
            raise VmemError(f"remote region {reg.source} ({reg.side}) exhausted: need {n} pages, {free} free")
        start = self.used[region]
        self.used[region] += n
        return [(region, reg.base + (start + k) * self.map.page_bytes) for k in range(n)]

    def allocate(self, size_bytes: int, policy: Policy | str) -> PagePlacement:
        if size_bytes <= 0:
            raise VmemError("allocation size must be positive")
        policy = Policy(policy)
        n = -(-size_bytes // self.map.page_bytes)
        if policy is Policy.LOCAL or len(self.map.remote_regions) == 1:
            return PagePlacement(tuple(self._take(0, n)))
        left = (n + 1) // 2  # odd page goes to the left half
        right = n - left
        # check both halves before touching either so a failure leaves no partial state
        for region, need in ((0, left), (1, right)):
            if need > self.map.region_pages(region) - self.used[region]:
                self._take(region, need)
        return PagePlacement(tuple(self._take(0, left) + self._take(1, right)))


def allocate_remote(size_bytes: int, policy: Policy | str, amap: AddressSpaceMap) -> PagePlacement:
    return RemoteAllocator(amap).allocate(size_bytes, policy)


def migration_time(nbytes: float, path: MigrationPath, policy: Policy | str | None = None) -> float:
    """Transfer time over a device's migration path.

    BW_AWARE moves the two equal halves concurrently over both segments.
    """
    if nbytes <= 0:
        return 0.0
    segs = path.active_segments(None if policy is None else Policy(policy))
    share = nbytes / len(segs)
    return max(share / s.bandwidth + s.latency for s in segs)


# -- planning --------------------------------------------------------------------


class Directive(str, Enum):
    KEEP_LOCAL = "keepLocal"
    OFFLOAD = "offload"
    RECOMPUTE = "recompute"


@dataclass(frozen=True)
class TensorPlan:
    tensor: str
    producer: int | None
    nbytes: int
    directive: Directive
    created: int
    last_forward: int
    need_from: int
    last_use: int
    offload_after: int | None = None
    offload_deadline: int | None = None
    prefetch_issue: int | None = None
    prefetch_before: int | None = None
    recompute_at: int | None = None

    def intervals(self) -> list[tuple[int, int]]:
        """Inclusive timeline intervals during which the tensor occupies local memory."""
        if self.directive is Directive.KEEP_LOCAL:
            return [(self.created, self.last_use)]
        if self.directive is Directive.RECOMPUTE:
            return [(self.created, self.last_forward), (self.need_from, self.last_use)]
        issue = self.need_from if self.prefetch_issue is None else self.prefetch_issue
        return [(self.created, self.offload_deadline - 1), (issue, self.last_use)]


@dataclass(frozen=True)
class MigrationPlan:
    tensors: tuple[TensorPlan, ...]
    layer_count: int
    capacity_bytes: float
    residency: tuple[int, ...]
    weight_bytes: int
    offload_direction: CopyDirection | None
    prefetch_direction: CopyDirection | None
    mode: str = "default"

    @property
    def offload_bytes(self) -> int:
        return sum(t.nbytes for t in self.tensors if t.directive is Directive.OFFLOAD)

    @property
    def prefetch_bytes(self) -> int:
        return self.offload_bytes

    @property
    def peak_residency(self) -> int:
        return max(self.residency) if self.residency else 0

    def by_name(self) -> dict[str, TensorPlan]:
        return {t.tensor: t for t in self.tensors}

    def count(self, directive: Directive) -> int:
        return sum(1 for t in self.tensors if t.directive is directive)

    def dump(self) -> str:
        rows = [
            f"# mode={self.mode} layers={self.layer_count} capacity={self.capacity_bytes:g} peak={self.peak_residency}"
        ]
        rows.append("tensor\tdirective\tbytes\tissue")
        for t in self.tensors:
            if t.directive is Directive.OFFLOAD:
                issue = f"offload@L{t.offload_after} prefetch@{t.prefetch_issue}->L{t.prefetch_before}"
            elif t.directive is Directive.RECOMPUTE:
                issue = f"recompute->L{t.recompute_at}"
            else:
                issue = "-"
            rows.append(f"{t.tensor}\t{t.directive.value}\t{t.nbytes}\t{issue}")
        return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class PlanOptions:
    offload_weights: bool = False
    needed_only: bool = False
    recompute: bool = True
    # how many positions ahead of need a prefetch may be issued; None = capacity-bound only
    prefetch_lookahead: int | None = None
    # positions an offload may stay in flight past its last forward use before
    # compute waits for it; None = as long as capacity allows
    offload_slack: int | None = None


def _local_bandwidth(path: MigrationPath) -> float:
    # directives are decided on the single-segment bandwidth so page placement
    # policy never changes which tensors move
    return path.segments[0].bandwidth


def _recompute_wins(
    dag: NetworkDAG, cfg: TrainingConfig, spec: DeviceSpec, producer: int, nbytes: int, path: MigrationPath
) -> bool:
    fp = shard_footprint(dag.layers[producer], cfg)
    redo = layer_compute_time(fp, spec, Phase.FORWARD).seconds
    seg = path.segments[0]
    round_trip = 2 * (nbytes / _local_bandwidth(path) + seg.latency)
    return redo < round_trip


def _layer_working_set(dag: NetworkDAG, cfg: TrainingConfig) -> list[int]:
    n = len(dag.layers)
    work = [0] * (2 * n)
    for layer in dag.layers:
        fp = shard_footprint(layer, cfg)
        extra = fp.grad_in_bytes + fp.weight_grad_bytes
        if layer.kind.weighted:
            extra += fp.grad_out_bytes
        # weight-free layers write dX over dY in place
        work[backward_position(layer.id, n)] = extra
    return work


def _residency(n: int, base: int, work: Sequence[int], plans: Sequence[TensorPlan]) -> list[int]:
    diff = [0] * (2 * n + 1)
    for tp in plans:
        for lo, hi in tp.intervals():
            if lo <= hi:
                diff[lo] += tp.nbytes
                diff[hi + 1] -= tp.nbytes
    res, acc = [], 0
    for pos in range(2 * n):
        acc += diff[pos]
        res.append(base + acc + work[pos])
    return res


def _weight_reuse(dag: NetworkDAG) -> list[TensorReuse]:
    return [
        TensorReuse(f"W{layer.id}", layer.id, (layer.id,), layer.id, layer.id, layer.id)
        for layer in dag.layers
        if layer.kind.weighted
    ]


def plan_migration(
    dag: NetworkDAG,
    cfg: TrainingConfig,
    t: Topology,
    reuse: Sequence[TensorReuse] | None = None,
    options: PlanOptions = PlanOptions(),
    device: int = 0,
) -> MigrationPlan:
    n = len(dag.layers)
    reuse = list(reuse_schedule(dag) if reuse is None else reuse)
    spec = t.device_spec
    capacity = t.local_capacity_bytes
    path = None if t.unbounded_local_memory else t.migration_path(device)
    shards = [shard_footprint(layer, cfg) for layer in dag.layers]
    total_weights = sum(fp.weight_bytes for fp in shards)
    work = _layer_working_set(dag, cfg)

    entries: list[tuple[TensorReuse, int, bool]] = [(r, tensor_bytes(dag, cfg, r), False) for r in reuse]
    if options.offload_weights:
        entries += [(r, shards[r.producer].weight_bytes, True) for r in _weight_reuse(dag)]
    base = 0 if options.offload_weights else total_weights

    # which tensors are cheaper to regenerate than to move
    recomputed: set[str] = set()
    if path is not None and options.recompute:
        by_producer = {r.producer: r for r, _, w in entries if not w and r.producer is not None}
        for r, nbytes, is_weight in entries:
            if is_weight or r.producer is None or not r.consumers:
                continue
            producer = dag.layers[r.producer]
            if producer.kind not in RECOMPUTE_KINDS:
                continue
            # recompute never chains: the producer's own inputs must be real copies
            if any(
                by_producer.get(p) is not None and by_producer[p].tensor in recomputed for p in producer.predecessors
            ):
                continue
            if _recompute_wins(dag, cfg, spec, r.producer, nbytes, path):
                recomputed.add(r.tensor)

    # a recomputed tensor pulls its producer's inputs forward to its own first use
    pulled: dict[str, int] = {}
    out_name = {r.producer: r.tensor for r, _, w in entries if not w and r.producer is not None}
    input_name = {r.consumers[0]: r.tensor for r, _, w in entries if not w and r.producer is None}
    for r, _, _ in entries:
        if r.tensor in recomputed:
            pos = backward_position(r.first_backward_use, n)
            producer = dag.layers[r.producer]
            sources = [out_name[p] for p in producer.predecessors] or [input_name[producer.id]]
            for src in sources:
                pulled[src] = min(pulled.get(src, pos), pos)

    plans: list[TensorPlan] = []
    movable: list[int] = []
    for r, nbytes, is_weight in entries:
        created = 0 if is_weight else (r.producer if r.producer is not None else r.consumers[0])
        need = backward_position(r.first_backward_use, n)
        need = min(need, pulled.get(r.tensor, need))
        last_use = backward_position(r.last_backward_use, n)
        common = dict(
            tensor=r.tensor,
            producer=r.producer,
            nbytes=nbytes,
            created=created,
            last_forward=r.last_forward_use,
            need_from=need,
            last_use=last_use,
        )
        if path is None or not r.consumers or need - r.last_forward_use <= 1 or nbytes == 0:
            # nothing to gain: no backing store, no reuse gap, or nothing to move
            plans.append(TensorPlan(directive=Directive.KEEP_LOCAL, **common))
        elif r.tensor in recomputed:
            plans.append(TensorPlan(directive=Directive.RECOMPUTE, recompute_at=r.first_backward_use, **common))
        else:
            plans.append(TensorPlan(directive=Directive.OFFLOAD, **common))
            movable.append(len(plans) - 1)

    if options.needed_only and path is not None:
        plans = _keep_what_fits(n, base, work, plans, capacity)
        movable = [i for i, tp in enumerate(plans) if tp.directive is Directive.OFFLOAD]

    for i in movable:
        tp = plans[i]
        if tp.directive is not Directive.OFFLOAD:
            continue
        plans[i] = _replace(
            tp,
            offload_after=tp.last_forward,
            offload_deadline=tp.last_forward + 2,
            prefetch_issue=tp.need_from,
            prefetch_before=2 * n - 1 - tp.need_from,
        )

    res = _residency(n, base, work, plans)
    peak = max(res) if res else 0
    if peak > capacity:
        pos = res.index(peak)
        layer = pos if pos < n else 2 * n - 1 - pos
        phase = "forward" if pos < n else "backward"
        raise InfeasibleWorkloadError(
            f"{dag.name}: {peak} bytes must be resident at {phase} layer {layer}, local capacity is {capacity:g}"
        )

    # greedy prefetch hoisting: earliest issue position that keeps residency within capacity
    order = sorted(
        (i for i, tp in enumerate(plans) if tp.directive is Directive.OFFLOAD),
        key=lambda i: (plans[i].need_from, plans[i].tensor),
    )
    for i in order:
        tp = plans[i]
        lo = n if options.prefetch_lookahead is None else max(n, tp.need_from - options.prefetch_lookahead)
        lo = min(lo, tp.need_from)
        chosen = tp.need_from
        # residency over [q, need) must absorb the tensor; scan from need downwards
        headroom = math.inf
        for q in range(tp.need_from - 1, lo - 1, -1):
            headroom = min(headroom, capacity - res[q])
            if headroom < tp.nbytes:
                break
            chosen = q
        if chosen < tp.need_from:
            for q in range(chosen, tp.need_from):
                res[q] += tp.nbytes
            plans[i] = _replace(tp, prefetch_issue=chosen)

    # offloads may finish late while capacity allows; compute only waits on
    # an offload when its copy must leave to make room
    order = sorted(
        (i for i, tp in enumerate(plans) if tp.directive is Directive.OFFLOAD),
        key=lambda i: (plans[i].last_forward, plans[i].tensor),
    )
    for i in order:
        tp = plans[i]
        deadline = tp.offload_deadline
        limit = (
            tp.prefetch_issue
            if options.offload_slack is None
            else min(tp.prefetch_issue, tp.last_forward + 1 + options.offload_slack)
        )
        while deadline < limit and res[deadline] + tp.nbytes <= capacity:
            res[deadline] += tp.nbytes
            deadline += 1
        if deadline != tp.offload_deadline:
            plans[i] = _replace(tp, offload_deadline=deadline)

    if path is None:
        off_dir = pre_dir = None
    elif path.host_backed:
        off_dir, pre_dir = CopyDirection.LOCAL_TO_HOST, CopyDirection.HOST_TO_LOCAL
    else:
        off_dir, pre_dir = CopyDirection.LOCAL_TO_REMOTE, CopyDirection.REMOTE_TO_LOCAL
    return MigrationPlan(
        tensors=tuple(plans),
        layer_count=n,
        capacity_bytes=capacity,
        residency=tuple(res),
        weight_bytes=total_weights,
        offload_direction=off_dir,
        prefetch_direction=pre_dir,
        mode="needed-only" if options.needed_only else "default",
    )


def _replace(tp: TensorPlan, **changes) -> TensorPlan:
    return replace(tp, **changes)


def _keep_what_fits(
    n: int, base: int, work: Sequence[int], plans: list[TensorPlan], capacity: float
) -> list[TensorPlan]:
    """Keep tensors local, shortest reuse distance first, while the peak still fits.

    This is the opt-in mode where only the tensors that must leave do.
    """
    plans = list(plans)
    candidates = sorted(
        (i for i, tp in enumerate(plans) if tp.directive is not Directive.KEEP_LOCAL),
        key=lambda i: (plans[i].need_from - plans[i].last_forward, plans[i].tensor),
    )
    for i in candidates:
        trial = list(plans)
        trial[i] = _replace(plans[i], directive=Directive.KEEP_LOCAL)
        # pessimistic check with every remaining offload prefetched just in time
        staged = [
            _replace(tp, offload_deadline=tp.last_forward + 2) if tp.directive is Directive.OFFLOAD else tp
            for tp in trial
        ]
        if max(_residency(n, base, work, staged)) <= capacity:
            plans = trial
    return plans
