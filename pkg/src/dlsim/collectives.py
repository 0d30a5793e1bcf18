"""Ring-algorithm collectives: an analytical timing model and a functional oracle.

The timing model charges, per ring and per algorithm step, the time to move one
chunk across the slowest link plus the pipeline fill of the message-sized
packets through any intermediate (non-participant) hops. The functional
simulator steps the very same schedule on numpy vectors so the two can be
cross-checked.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .fabric import NodeId, NodeKind, Ring, Topology


class CollectiveError(ValueError):
    pass


class CollectiveKind(str, Enum):
    ALL_REDUCE = "allReduce"
    ALL_GATHER = "allGather"
    BROADCAST = "broadcast"

    def steps(self, p: int) -> int:
        if p < 2:
            return 0
        if self is CollectiveKind.ALL_GATHER:
            return p - 1
        # all-reduce is reduce-scatter + all-gather; broadcast is scatter + all-gather
        return 2 * (p - 1)


@dataclass(frozen=True)
class CollectiveRequest:
    kind: CollectiveKind
    participants: tuple[NodeId, ...]
    total_bytes: int
    message_bytes: int = 4096
    element_bytes: int = 1
    root: NodeId | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", CollectiveKind(self.kind))
        object.__setattr__(self, "participants", tuple(self.participants))
        if self.total_bytes < 0:
            raise CollectiveError("totalBytes must be non-negative")
        if self.message_bytes <= 0 or self.element_bytes <= 0:
            raise CollectiveError("messageBytes and elementBytes must be positive")
        if self.total_bytes % self.element_bytes:
            raise CollectiveError("totalBytes must be a whole number of elements")
        if len(set(self.participants)) != len(self.participants):
            raise CollectiveError("duplicate participants")
        if self.root is not None and self.root not in self.participants:
            raise CollectiveError(f"broadcast root {self.root} is not a participant")

    @property
    def root_node(self) -> NodeId:
        return self.root if self.root is not None else self.participants[0]


@dataclass(frozen=True)
class CollectiveCost:
    seconds: float
    per_ring_bytes: tuple[int, ...]
    steps: int
    ring_seconds: tuple[float, ...] = ()


@dataclass(frozen=True)
class RingSchedule:
    """A ring restricted to the collective's participants."""

    ring_index: int
    order: tuple[NodeId, ...]
    # physical links traversed from order[i] to order[i+1]
    paths: tuple[tuple[int, ...], ...]
    bandwidth: float

    @property
    def max_hops(self) -> int:
        return max(len(p) for p in self.paths)


def _participant_schedule(t: Topology, index: int, ring: Ring, participants: set[NodeId]) -> RingSchedule | None:
    n = len(ring.nodes)
    first: dict[NodeId, int] = {}
    for pos, node in enumerate(ring.nodes):
        if node in participants and node not in first:
            first[node] = pos
    if set(first) != participants:
        return None
    order = sorted(first, key=first.get)
    paths = []
    for k, node in enumerate(order):
        start = first[node]
        stop = first[order[(k + 1) % len(order)]]
        span = (stop - start) % n or n
        paths.append(tuple(ring.links[(start + j) % n] for j in range(span)))
    return RingSchedule(index, tuple(order), tuple(paths), t.ring_bandwidth(ring))


def usable_rings(t: Topology, participants: Sequence[NodeId]) -> list[RingSchedule]:
    members = set(participants)
    unknown = [p for p in members if p.kind is not NodeKind.DEVICE or p not in t.nodes]
    if unknown:
        raise CollectiveError(f"participants not device-nodes of the topology: {sorted(map(str, unknown))}")
    found = []
    for i, ring in enumerate(t.rings):
        sched = _participant_schedule(t, i, ring, members)
        if sched is not None:
            found.append(sched)
    if not found:
        raise CollectiveError("no ring covers all participants")
    return found


def proportional_split(units: int, weights: Sequence[float]) -> list[int]:
    """Integer split of ``units`` proportional to ``weights`` (largest remainder, ties by index)."""
    total = sum(weights)
    raw = [units * w / total for w in weights]
    base = [int(x) for x in raw]
    short = units - sum(base)
    order = sorted(range(len(weights)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:short]:
        base[i] += 1
    return base


def _ring_units(req: CollectiveRequest, rings: list[RingSchedule]) -> list[int]:
    units = req.total_bytes // req.element_bytes
    weights = [r.bandwidth for r in rings]
    p = len(req.participants)
    if req.kind is CollectiveKind.ALL_GATHER and units % p == 0:
        # split each participant's contribution so every ring gathers whole pieces
        return [u * p for u in proportional_split(units // p, weights)]
    return proportional_split(units, weights)


def ring_step_seconds(
    chunk_bytes: float, message_bytes: float, hops: int, bandwidth: float, hop_latency: float
) -> float:
    msg = min(message_bytes, chunk_bytes)
    return chunk_bytes / bandwidth + (hops - 1) * msg / bandwidth + hops * hop_latency


def collective_time(t: Topology, req: CollectiveRequest) -> CollectiveCost:
    p = len(req.participants)
    if p == 0:
        raise CollectiveError("no participants")
    rings = usable_rings(t, req.participants)
    steps = req.kind.steps(p)
    units = _ring_units(req, rings)
    per_ring = tuple(u * req.element_bytes for u in units)
    ring_secs = []
    for sched, nbytes in zip(rings, per_ring):
        if nbytes == 0 or steps == 0:
            ring_secs.append(0.0)
            continue
        step = ring_step_seconds(nbytes / p, req.message_bytes, sched.max_hops, sched.bandwidth, t.params.hop_latency)
        ring_secs.append(steps * step)
    return CollectiveCost(max(ring_secs), per_ring, steps, tuple(ring_secs))


def bandwidth_optimal_seconds(kind: CollectiveKind, p: int, total_bytes: float, rings: int, bandwidth: float) -> float:
    """Lower bound with every hop term removed: steps/p of each ring's share over one link."""
    return kind.steps(p) / p * (total_bytes / rings) / bandwidth


# -- functional oracle ----------------------------------------------------------


@dataclass(frozen=True)
class Transfer:
    step: int
    ring: int
    link: int
    src: NodeId
    dst: NodeId
    chunk: int
    elements: int


@dataclass
class FunctionalTrace:
    steps: int = 0
    ring_elements: tuple[int, ...] = ()
    transfers: list[Transfer] = field(default_factory=list)

    def link_elements(self) -> dict[tuple[int, int], int]:
        """Elements carried per (ring, link)."""
        out: dict[tuple[int, int], int] = {}
        for tr in self.transfers:
            out[(tr.ring, tr.link)] = out.get((tr.ring, tr.link), 0) + tr.elements
        return out

    def dump(self) -> str:
        lines = [f"steps {self.steps}", "ring_elements " + " ".join(map(str, self.ring_elements))]
        for tr in self.transfers:
            lines.append(f"{tr.step} R{tr.ring} L{tr.link} {tr.src}->{tr.dst} chunk={tr.chunk} n={tr.elements}")
        return "\n".join(lines) + "\n"


def _hop_nodes(t: Topology, start: NodeId, path: tuple[int, ...]) -> list[tuple[int, NodeId, NodeId]]:
    hops = []
    cur = start
    for lid in path:
        link = t.links[lid]
        nxt = link.b if link.a == cur else link.a
        hops.append((lid, cur, nxt))
        cur = nxt
    return hops


class _RingRun:
    def __init__(self, t: Topology, sched: RingSchedule, trace: FunctionalTrace, rotate_to: NodeId | None = None):
        order = list(sched.order)
        paths = list(sched.paths)
        if rotate_to is not None:
            k = order.index(rotate_to)
            order = order[k:] + order[:k]
            paths = paths[k:] + paths[:k]
        self.t = t
        self.sched = sched
        self.order = order
        self.hops = [_hop_nodes(t, order[i], paths[i]) for i in range(len(order))]
        self.trace = trace

    @property
    def p(self) -> int:
        return len(self.order)

    def send(self, step: int, pos: int, chunk: int, data: np.ndarray):
        for lid, a, b in self.hops[pos]:
            self.trace.transfers.append(Transfer(step, self.sched.ring_index, lid, a, b, chunk, int(data.size)))


def _split_parts(vec: np.ndarray, counts: Sequence[int]) -> list[np.ndarray]:
    edges = np.cumsum(counts)[:-1]
    return np.split(vec, edges)


def simulate_collective_functional(t: Topology, req: CollectiveRequest, values: Sequence[np.ndarray]):
    """Run the ring schedule literally; returns (per-participant results, trace).

    ``values[i]`` belongs to ``req.participants[i]``. For all-gather the result
    is the concatenation in participant order; for broadcast only the root's
    vector matters.
    """
    p = len(req.participants)
    if len(values) != p:
        raise CollectiveError(f"expected {p} value vectors, got {len(values)}")
    vals = [np.asarray(v) for v in values]
    lengths = {v.shape for v in vals}
    if len(lengths) != 1 or vals[0].ndim != 1:
        raise CollectiveError(f"value vectors must be 1-D with equal lengths, got shapes {sorted(lengths)}")
    length = vals[0].size
    rings = usable_rings(t, req.participants)
    trace = FunctionalTrace(steps=req.kind.steps(p))
    weights = [r.bandwidth for r in rings]
    index_of = {node: i for i, node in enumerate(req.participants)}

    if req.kind is CollectiveKind.ALL_GATHER:
        counts = proportional_split(length, weights)
        trace.ring_elements = tuple(c * p for c in counts)
        # gathered[i][j] = participant i's copy of participant j's piece, per ring
        pieces = [_split_parts(v, counts) for v in vals]
        gathered = [[[None] * p for _ in range(p)] for _ in rings]
        for r, sched in enumerate(rings):
            run = _RingRun(t, sched, trace)
            held = gathered[r]
            pos_of = [index_of[n] for n in run.order]
            for pos, who in enumerate(pos_of):
                held[who][who] = pieces[who][r].copy()
            # step s: ring position i forwards the piece that originated at i - s
            for s in range(run.p - 1):
                moves = []
                for pos in range(run.p):
                    origin = pos_of[(pos - s) % run.p]
                    data = held[pos_of[pos]][origin]
                    run.send(s, pos, origin, data)
                    moves.append((pos_of[(pos + 1) % run.p], origin, data))
                for dst, origin, data in moves:
                    held[dst][origin] = data.copy()
        results = []
        for who in range(p):
            out = []
            for origin in range(p):
                out.extend(gathered[r][who][origin] for r in range(len(rings)))
            results.append(np.concatenate(out))
        return results, trace

    counts = proportional_split(length, weights)
    trace.ring_elements = tuple(counts)
    parts = [_split_parts(v, counts) for v in vals]
    per_ring_out = []
    for r, sched in enumerate(rings):
        rotate = req.root_node if req.kind is CollectiveKind.BROADCAST else None
        run = _RingRun(t, sched, trace, rotate)
        pos_of = [index_of[n] for n in run.order]
        # buf[pos][c] is ring position pos's copy of chunk c
        if req.kind is CollectiveKind.ALL_REDUCE:
            buf = [np.array_split(parts[who][r].copy(), run.p) for who in pos_of]
            for s in range(run.p - 1):
                moves = []
                for pos in range(run.p):
                    c = (pos - s) % run.p
                    run.send(s, pos, c, buf[pos][c])
                    moves.append(((pos + 1) % run.p, c, buf[pos][c]))
                for dst, c, data in moves:
                    buf[dst][c] = buf[dst][c] + data
            offset = run.p - 1
            owned = lambda pos: (pos + 1) % run.p  # noqa: E731
        else:
            root_data = np.array_split(parts[pos_of[0]][r].copy(), run.p)
            buf = [[None] * run.p for _ in range(run.p)]
            buf[0] = list(root_data)
            # scatter: the chunk for position d leaves the root at step p-1-d
            in_flight: dict[int, int] = {}
            for s in range(run.p - 1):
                moves = []
                d = run.p - 1 - s
                in_flight[d] = 0
                for dest, at in sorted(in_flight.items()):
                    if at < dest:
                        run.send(s, at, dest, buf[at][dest])
                        moves.append((dest, at + 1, buf[at][dest]))
                for dest, nxt, data in moves:
                    buf[nxt][dest] = data
                    in_flight[dest] = nxt
            offset = run.p - 1
            owned = lambda pos: pos  # noqa: E731
        # all-gather phase: each position starts with its fully formed chunk
        for s in range(run.p - 1):
            moves = []
            for pos in range(run.p):
                c = (owned(pos) - s) % run.p
                run.send(offset + s, pos, c, buf[pos][c])
                moves.append(((pos + 1) % run.p, c, buf[pos][c]))
            for dst, c, data in moves:
                buf[dst][c] = data.copy()
        per_ring_out.append({pos_of[pos]: np.concatenate(buf[pos]) for pos in range(run.p)})
    results = [np.concatenate([per_ring_out[r][who] for r in range(len(rings))]) for who in range(p)]
    return results, trace
