"""Node/link graphs and ring decompositions for the compared system designs.

Designs:

``dc``            cube-mesh device interconnect (3 rings), PCIe to the host
``hc``            half the links to host memory, one inter-device ring
``mc_star``       memory-nodes attached through one rearranged ring (24 hops)
``mc_folded``     memory-nodes folded inward (rings of 8, 12 and 20 hops)
``mc_ring_local`` alternating device/memory ring, LOCAL page placement
``mc_ring_bw``    alternating device/memory ring, BW_AWARE page placement
``oracle``        ``dc`` with unbounded device-local memory
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .device import DeviceSpec


class FabricError(ValueError):
    pass


class NodeKind(str, Enum):
    DEVICE = "device"
    MEMORY = "memory"
    HOST = "host"


_PREFIX = {NodeKind.DEVICE: "D", NodeKind.MEMORY: "M", NodeKind.HOST: "H"}
_KIND_ORDER = {NodeKind.DEVICE: 0, NodeKind.MEMORY: 1, NodeKind.HOST: 2}


@dataclass(frozen=True)
class NodeId:
    kind: NodeKind
    index: int

    def __str__(self) -> str:
        return f"{_PREFIX[self.kind]}{self.index}"

    def sort_key(self):
        return (_KIND_ORDER[self.kind], self.index)


def D(i: int) -> NodeId:
    return NodeId(NodeKind.DEVICE, i)


def M(i: int) -> NodeId:
    return NodeId(NodeKind.MEMORY, i)


def H(i: int) -> NodeId:
    return NodeId(NodeKind.HOST, i)


class LinkClass(str, Enum):
    HIGH_BANDWIDTH = "highBandwidth"
    PCIE = "pcie"


@dataclass(frozen=True)
class Link:
    id: int
    a: NodeId
    b: NodeId
    bandwidth: float
    hop_latency: float
    cls: LinkClass = LinkClass.HIGH_BANDWIDTH

    def joins(self, x: NodeId, y: NodeId) -> bool:
        return {self.a, self.b} == {x, y}


@dataclass(frozen=True)
class Ring:
    nodes: tuple[NodeId, ...]
    links: tuple[int, ...]

    @property
    def hop_count(self) -> int:
        return len(self.links)

    def devices(self) -> list[NodeId]:
        seen: list[NodeId] = []
        for node in self.nodes:
            if node.kind is NodeKind.DEVICE and node not in seen:
                seen.append(node)
        return seen


@dataclass(frozen=True)
class MemoryNodeSpec:
    dimm_count: int = 10
    dimm_capacity_bytes: float = 128e9
    aggregate_bandwidth: float = 256e9
    access_latency_cycles: int = 100
    groups: int = 2

    def __post_init__(self):
        if self.dimm_count < 1 or self.groups < 1:
            raise ValueError("MemoryNodeSpec.dimm_count and groups must be positive")
        if not (self.dimm_capacity_bytes > 0 and self.aggregate_bandwidth > 0):
            raise ValueError("MemoryNodeSpec capacity and bandwidth must be positive")

    @property
    def capacity_bytes(self) -> float:
        return self.dimm_count * self.dimm_capacity_bytes

    @property
    def group_bandwidth(self) -> float:
        return self.aggregate_bandwidth / self.groups

    @property
    def group_capacity_bytes(self) -> float:
        return self.capacity_bytes / self.groups


@dataclass(frozen=True)
class HostSpec:
    socket_count: int
    devices_per_socket: int
    socket_mem_bandwidth: float


@dataclass(frozen=True)
class FabricParams:
    hop_latency: float = 0.5e-6
    pcie_bandwidth: float = 16e9
    pcie_shared: bool = False
    pcie_switches: int = 4
    dc_socket_bandwidth: float = 80e9
    hc_socket_bandwidth: float = 300e9
    devices_per_socket: int = 4

    def __post_init__(self):
        if self.hop_latency < 0:
            raise ValueError("FabricParams.hop_latency must be non-negative")
        for name in (
            "pcie_bandwidth",
            "pcie_switches",
            "dc_socket_bandwidth",
            "hc_socket_bandwidth",
            "devices_per_socket",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"FabricParams.{name} must be positive")


class Policy(str, Enum):
    LOCAL = "LOCAL"
    BW_AWARE = "BW_AWARE"


@dataclass(frozen=True)
class MigrationSegment:
    """One backing-store region reachable from a device over dedicated links."""

    target: NodeId
    side: str
    links: tuple[int, ...]
    link_bandwidth: float
    backing_bandwidth: float
    latency: float

    @property
    def bandwidth(self) -> float:
        return min(self.link_bandwidth, self.backing_bandwidth)


@dataclass(frozen=True)
class MigrationPath:
    device: NodeId
    segments: tuple[MigrationSegment, ...]
    policy: Policy = Policy.LOCAL

    def active_segments(self, policy: Policy | None = None) -> tuple[MigrationSegment, ...]:
        policy = self.policy if policy is None else Policy(policy)
        if policy is Policy.BW_AWARE:
            return self.segments
        return self.segments[:1]

    def bandwidth(self, policy: Policy | None = None) -> float:
        return sum(seg.bandwidth for seg in self.active_segments(policy))

    def latency(self, policy: Policy | None = None) -> float:
        return max(seg.latency for seg in self.active_segments(policy))

    def duplex_bandwidth(self, policy: Policy | None = None) -> float:
        """Per-direction rate while offloads and prefetches run at the same time.

        Links are full duplex, but each backing region's bandwidth is shared by
        reads and writes, so each direction gets at most half of it.
        """
        return sum(min(seg.link_bandwidth, seg.backing_bandwidth / 2) for seg in self.active_segments(policy))

    @property
    def host_backed(self) -> bool:
        return self.segments[0].target.kind is NodeKind.HOST


class Design(str, Enum):
    DC = "dc"
    HC = "hc"
    MC_STAR = "mc_star"
    MC_FOLDED = "mc_folded"
    MC_RING_LOCAL = "mc_ring_local"
    MC_RING_BW = "mc_ring_bw"
    ORACLE = "oracle"

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    Design.DC: "DC",
    Design.HC: "HC",
    Design.MC_STAR: "MC-STAR",
    Design.MC_FOLDED: "MC-S",
    Design.MC_RING_LOCAL: "MC-L",
    Design.MC_RING_BW: "MC-B",
    Design.ORACLE: "ORACLE",
}

DESIGN_ALIASES = {
    "mc_s": Design.MC_FOLDED,
    "mc_l": Design.MC_RING_LOCAL,
    "mc_b": Design.MC_RING_BW,
    "mc_ring": Design.MC_RING_BW,
    "fig7a": Design.MC_STAR,
    "fig7b": Design.MC_FOLDED,
}


def parse_design(tag: str | Design) -> Design:
    if isinstance(tag, Design):
        return tag
    key = str(tag).strip().lower().replace("-", "_")
    if key in DESIGN_ALIASES:
        return DESIGN_ALIASES[key]
    try:
        return Design(key)
    except ValueError:
        raise FabricError(f"unknown design {tag!r}") from None


@dataclass(frozen=True)
class Topology:
    design: Design
    nodes: tuple[NodeId, ...]
    links: tuple[Link, ...]
    rings: tuple[Ring, ...]
    device_spec: DeviceSpec
    host: HostSpec
    migration_paths: dict = field(default_factory=dict)
    memory_spec: MemoryNodeSpec = MemoryNodeSpec()
    params: FabricParams = FabricParams()
    local_capacity_bytes: float = 16e9

    @property
    def devices(self) -> list[NodeId]:
        return [n for n in self.nodes if n.kind is NodeKind.DEVICE]

    @property
    def memory_nodes(self) -> list[NodeId]:
        return [n for n in self.nodes if n.kind is NodeKind.MEMORY]

    @property
    def device_count(self) -> int:
        return len(self.devices)

    def link(self, lid: int) -> Link:
        return self.links[lid]

    def ring_links(self, ring: Ring) -> list[Link]:
        return [self.links[i] for i in ring.links]

    def ring_bandwidth(self, ring: Ring) -> float:
        return min(self.links[i].bandwidth for i in ring.links)

    def migration_path(self, device: NodeId | int) -> MigrationPath | None:
        if isinstance(device, int):
            device = D(device)
        return self.migration_paths.get(device)

    @property
    def unbounded_local_memory(self) -> bool:
        return math.isinf(self.local_capacity_bytes)

    def remote_capacity_bytes(self) -> float:
        return len(self.memory_nodes) * self.memory_spec.capacity_bytes


class _Builder:
    def __init__(self, spec: DeviceSpec, params: FabricParams):
        self.spec = spec
        self.params = params
        self.links: list[Link] = []
        self.nodes: set[NodeId] = set()

    def link(self, a: NodeId, b: NodeId, *, bandwidth: float | None = None, cls=LinkClass.HIGH_BANDWIDTH) -> int:
        lid = len(self.links)
        self.nodes.update((a, b))
        self.links.append(
            Link(lid, a, b, self.spec.link_bandwidth if bandwidth is None else bandwidth, self.params.hop_latency, cls)
        )
        return lid

    def ring(self, nodes: list[NodeId], links: list[int] | None = None) -> Ring:
        if links is None:
            links = [self.link(nodes[i], nodes[(i + 1) % len(nodes)]) for i in range(len(nodes))]
        return Ring(tuple(nodes), tuple(links))

    def sorted_nodes(self, extra: Iterable[NodeId] = ()) -> tuple[NodeId, ...]:
        return tuple(sorted(self.nodes | set(extra), key=NodeId.sort_key))


# three edge-disjoint Hamiltonian cycles of the 8-device cube-mesh
_CUBE_MESH_RINGS_8 = (
    (0, 1, 2, 3, 4, 5, 6, 7),
    (0, 2, 4, 6, 1, 7, 5, 3),
    (0, 4, 7, 3, 1, 5, 2, 6),
)
# a 4-device mesh double-links every pair; the three Hamiltonian cycles of K4
# together cover each pair exactly twice
_CUBE_MESH_RINGS_4 = (
    (0, 1, 2, 3),
    (0, 1, 3, 2),
    (0, 2, 1, 3),
)


def _check_count(device_count: int, allowed: Iterable[int], design: str):
    allowed = tuple(allowed)
    if device_count not in allowed:
        raise FabricError(f"{design} supports device counts {allowed}, got {device_count}")


def _host_segment(
    b: _Builder, dev: int, link_ids: list[int], link_bw: float, socket_bw: float, per_socket: int
) -> MigrationSegment:
    return MigrationSegment(
        target=H(dev // b.params.devices_per_socket),
        side="host",
        links=tuple(link_ids),
        link_bandwidth=link_bw,
        backing_bandwidth=socket_bw / per_socket,
        latency=b.params.hop_latency,
    )


def _host_spec(device_count: int, params: FabricParams, socket_bw: float) -> HostSpec:
    sockets = -(-device_count // params.devices_per_socket)
    return HostSpec(sockets, min(device_count, params.devices_per_socket), socket_bw)


def pcie_bandwidth_per_device(device_count: int, params: FabricParams) -> float:
    if not params.pcie_shared:
        return params.pcie_bandwidth
    return params.pcie_bandwidth * min(1.0, params.pcie_switches / device_count)


def build_dc(
    device_count: int = 8,
    spec: DeviceSpec = DeviceSpec(),
    params: FabricParams = FabricParams(),
    memory: MemoryNodeSpec = MemoryNodeSpec(),
) -> Topology:
    _check_count(device_count, (4, 8), "dc")
    b = _Builder(spec, params)
    cycles = _CUBE_MESH_RINGS_8 if device_count == 8 else _CUBE_MESH_RINGS_4
    rings = tuple(b.ring([D(i) for i in cycle]) for cycle in cycles)
    host = _host_spec(device_count, params, params.dc_socket_bandwidth)
    pcie_bw = pcie_bandwidth_per_device(device_count, params)
    paths = {}
    for i in range(device_count):
        lid = b.link(D(i), H(i // params.devices_per_socket), bandwidth=pcie_bw, cls=LinkClass.PCIE)
        seg = _host_segment(b, i, [lid], pcie_bw, host.socket_mem_bandwidth, host.devices_per_socket)
        paths[D(i)] = MigrationPath(D(i), (seg,))
    return Topology(
        design=Design.DC,
        nodes=b.sorted_nodes(),
        links=tuple(b.links),
        rings=rings,
        device_spec=spec,
        host=host,
        migration_paths=paths,
        memory_spec=memory,
        params=params,
        local_capacity_bytes=spec.local_mem_capacity_bytes,
    )


def build_hc(
    device_count: int = 8,
    spec: DeviceSpec = DeviceSpec(),
    params: FabricParams = FabricParams(),
    memory: MemoryNodeSpec = MemoryNodeSpec(),
) -> Topology:
    _check_count(device_count, (8,), "hc")
    b = _Builder(spec, params)
    host_links = spec.link_count // 2
    rings = (b.ring([D(i) for i in range(device_count)]),)
    host = _host_spec(device_count, params, params.hc_socket_bandwidth)
    paths = {}
    for i in range(device_count):
        ids = [b.link(D(i), H(i // params.devices_per_socket)) for _ in range(host_links)]
        seg = _host_segment(
            b, i, ids, host_links * spec.link_bandwidth, host.socket_mem_bandwidth, host.devices_per_socket
        )
        paths[D(i)] = MigrationPath(D(i), (seg,))
    return Topology(
        design=Design.HC,
        nodes=b.sorted_nodes(),
        links=tuple(b.links),
        rings=rings,
        device_spec=spec,
        host=host,
        migration_paths=paths,
        memory_spec=memory,
        params=params,
        local_capacity_bytes=spec.local_mem_capacity_bytes,
    )


def _memory_segment(b: _Builder, memory: MemoryNodeSpec, target: NodeId, side: str, ids: list[int]) -> MigrationSegment:
    return MigrationSegment(
        target=target,
        side=side,
        links=tuple(ids),
        link_bandwidth=sum(b.links[i].bandwidth for i in ids),
        backing_bandwidth=memory.group_bandwidth,
        latency=b.params.hop_latency,
    )


class _Designated:
    """Pair of dedicated D(n)-M(n) links, handed out one at a time to rings."""

    def __init__(self, b: _Builder, n: int, count: int = 2):
        self.ids = [b.link(D(i), M(i)) for i in range(n) for _ in range(count)]
        self.count = count
        self.used = Counter()

    def all(self, i: int) -> list[int]:
        return self.ids[i * self.count : (i + 1) * self.count]

    def take(self, i: int) -> int:
        k = self.used[i]
        if k >= self.count:
            raise FabricError(f"designated links of D{i} exhausted")
        self.used[i] += 1
        return self.ids[i * self.count + k]


def _detour_ring(b: _Builder, designated: _Designated, order: list[tuple[int, str]]) -> Ring:
    """Ring over devices in ``order``; each entry says how to reach the next device.

    ``"-"`` is a direct device link, ``"~"`` a detour D(x)->M(x)->M(y)->D(y).
    """
    nodes: list[NodeId] = []
    links: list[int] = []
    for pos, (dev, how) in enumerate(order):
        nxt = order[(pos + 1) % len(order)][0]
        nodes.append(D(dev))
        if how == "-":
            links.append(b.link(D(dev), D(nxt)))
        else:
            links.append(designated.take(dev))
            nodes.append(M(dev))
            links.append(b.link(M(dev), M(nxt)))
            nodes.append(M(nxt))
            links.append(designated.take(nxt))
    return Ring(tuple(nodes), tuple(links))


def build_mc_star(
    device_count: int = 8,
    spec: DeviceSpec = DeviceSpec(),
    variant: str = "fig7a",
    params: FabricParams = FabricParams(),
    memory: MemoryNodeSpec = MemoryNodeSpec(),
) -> Topology:
    """Star-attached memory-nodes: ``fig7a`` (rearranged ring) or ``fig7b`` (folded)."""
    _check_count(device_count, (8,), f"mc_star/{variant}")
    b = _Builder(spec, params)
    designated = _Designated(b, device_count)
    if variant == "fig7a":
        rings = [b.ring([D(i) for i in cycle]) for cycle in _CUBE_MESH_RINGS_8[1:]]
        # M0 -> D0 -> M0 -> M7 -> D7 -> M7 -> M6 ... each memory-node visited twice
        nodes: list[NodeId] = []
        links: list[int] = []
        order = [0] + list(range(device_count - 1, 0, -1))
        for pos, n in enumerate(order):
            nxt = order[(pos + 1) % len(order)]
            nodes += [M(n), D(n), M(n)]
            links += [designated.take(n), designated.take(n), b.link(M(n), M(nxt))]
        rings.append(Ring(tuple(nodes), tuple(links)))
        # memory-only ring; no device traffic ever uses it
        for n in range(device_count):
            b.link(M(n), M((n + 3) % device_count))
        design = Design.MC_STAR
    elif variant == "fig7b":
        rings = [
            b.ring([D(i) for i in _CUBE_MESH_RINGS_8[0]]),
            _detour_ring(
                b, designated, [(0, "-"), (2, "-"), (4, "~"), (6, "-"), (1, "-"), (7, "-"), (5, "~"), (3, "-")]
            ),
            _detour_ring(
                b, designated, [(3, "-"), (5, "~"), (0, "~"), (1, "~"), (4, "-"), (6, "~"), (2, "~"), (7, "~")]
            ),
        ]
        design = Design.MC_FOLDED
    else:
        raise FabricError(f"unknown mc_star variant {variant!r}")
    paths = {
        D(i): MigrationPath(D(i), (_memory_segment(b, memory, M(i), "designated", designated.all(i)),))
        for i in range(device_count)
    }
    return Topology(
        design=design,
        nodes=b.sorted_nodes(),
        links=tuple(b.links),
        rings=tuple(rings),
        device_spec=spec,
        host=_host_spec(device_count, params, params.dc_socket_bandwidth),
        migration_paths=paths,
        memory_spec=memory,
        params=params,
        local_capacity_bytes=spec.local_mem_capacity_bytes,
    )


def build_mc_ring(
    device_count: int = 8,
    spec: DeviceSpec = DeviceSpec(),
    policy: Policy | str = Policy.BW_AWARE,
    params: FabricParams = FabricParams(),
    memory: MemoryNodeSpec = MemoryNodeSpec(),
) -> Topology:
    """N/2 rings alternating device- and memory-nodes.

    D(i) sits between M(i-1) on its left and M(i) on its right; memory-node
    group 0 serves its left device neighbour and group 1 its right one.
    """
    if device_count < 2 or device_count % 2:
        raise FabricError(f"mc_ring needs an even device count >= 2, got {device_count}")
    policy = Policy(policy)
    if spec.link_count % memory.groups:
        raise FabricError("memory-node groups must divide the link count")
    b = _Builder(spec, params)
    order: list[NodeId] = []
    for i in range(device_count):
        order += [D(i), M(i)]
    n_rings = spec.link_count // 2
    rings = tuple(b.ring(order) for _ in range(n_rings))
    paths = {}
    for i in range(device_count):
        left = M((i - 1) % device_count)
        right = M(i)
        left_ids = [lid for r in rings for lid in r.links if b.links[lid].joins(D(i), left)]
        right_ids = [lid for r in rings for lid in r.links if b.links[lid].joins(D(i), right)]
        if device_count == 2:
            # both memory-nodes neighbour each device twice; split by ring position
            left_ids = [r.links[(2 * i - 1) % len(r.links)] for r in rings]
            right_ids = [r.links[2 * i] for r in rings]
        paths[D(i)] = MigrationPath(
            D(i),
            (
                _memory_segment(b, memory, left, "left", left_ids),
                _memory_segment(b, memory, right, "right", right_ids),
            ),
            policy,
        )
    return Topology(
        design=Design.MC_RING_BW if policy is Policy.BW_AWARE else Design.MC_RING_LOCAL,
        nodes=b.sorted_nodes(),
        links=tuple(b.links),
        rings=rings,
        device_spec=spec,
        host=_host_spec(device_count, params, params.dc_socket_bandwidth),
        migration_paths=paths,
        memory_spec=memory,
        params=params,
        local_capacity_bytes=spec.local_mem_capacity_bytes,
    )


def build_oracle(
    device_count: int = 8,
    spec: DeviceSpec = DeviceSpec(),
    params: FabricParams = FabricParams(),
    memory: MemoryNodeSpec = MemoryNodeSpec(),
) -> Topology:
    dc = build_dc(device_count, spec, params, memory)
    return Topology(
        design=Design.ORACLE,
        nodes=dc.nodes,
        links=dc.links,
        rings=dc.rings,
        device_spec=spec,
        host=dc.host,
        migration_paths={},
        memory_spec=memory,
        params=params,
        local_capacity_bytes=math.inf,
    )


def build_design(
    design: Design | str,
    device_count: int = 8,
    spec: DeviceSpec = DeviceSpec(),
    params: FabricParams = FabricParams(),
    memory: MemoryNodeSpec = MemoryNodeSpec(),
) -> Topology:
    design = parse_design(design)
    if design is Design.DC:
        return build_dc(device_count, spec, params, memory)
    if design is Design.HC:
        return build_hc(device_count, spec, params, memory)
    if design is Design.MC_STAR:
        return build_mc_star(device_count, spec, "fig7a", params, memory)
    if design is Design.MC_FOLDED:
        return build_mc_star(device_count, spec, "fig7b", params, memory)
    if design is Design.MC_RING_LOCAL:
        return build_mc_ring(device_count, spec, Policy.LOCAL, params, memory)
    if design is Design.MC_RING_BW:
        return build_mc_ring(device_count, spec, Policy.BW_AWARE, params, memory)
    return build_oracle(device_count, spec, params, memory)


def validate(t: Topology) -> list[str]:
    """Link budgets, ring edge-disjointness and ring closure; empty when sound."""
    problems: list[str] = []
    node_set = set(t.nodes)
    if len(node_set) != len(t.nodes):
        problems.append("duplicate node ids")
    budget: Counter = Counter()
    for i, link in enumerate(t.links):
        if link.id != i:
            problems.append(f"link {i} carries id {link.id}")
        if link.a == link.b:
            problems.append(f"link {i} is a self-loop on {link.a}")
        if not link.bandwidth > 0:
            problems.append(f"link {i} has non-positive bandwidth")
        if link.a not in node_set or link.b not in node_set:
            problems.append(f"link {i} references an unknown node")
        if link.cls is LinkClass.HIGH_BANDWIDTH:
            budget[link.a] += 1
            budget[link.b] += 1
    cap = t.device_spec.link_count
    for node, used in sorted(budget.items(), key=lambda kv: kv[0].sort_key()):
        if node.kind is not NodeKind.HOST and used > cap:
            problems.append(f"{node} uses {used} high-bandwidth endpoints (budget {cap})")
    if cap % t.memory_spec.groups:
        problems.append("memory-node groups do not divide the link count")
    claimed: dict[int, int] = {}
    for r, ring in enumerate(t.rings):
        if len(ring.nodes) != len(ring.links) or len(ring.nodes) < 2:
            problems.append(f"ring {r} is not a closed cycle")
            continue
        for k, lid in enumerate(ring.links):
            if not 0 <= lid < len(t.links):
                problems.append(f"ring {r} references unknown link {lid}")
                continue
            if lid in claimed:
                problems.append(f"link {lid} used by ring {claimed[lid]} and ring {r}")
            claimed[lid] = r
            a, b = ring.nodes[k], ring.nodes[(k + 1) % len(ring.nodes)]
            if not t.links[lid].joins(a, b):
                problems.append(f"ring {r} hop {k} ({a}->{b}) is not carried by link {lid}")
            if t.links[lid].cls is not LinkClass.HIGH_BANDWIDTH:
                problems.append(f"ring {r} uses non high-bandwidth link {lid}")
    for dev, path in t.migration_paths.items():
        for seg in path.segments:
            for lid in seg.links:
                link = t.links[lid]
                if dev not in (link.a, link.b) or seg.target not in (link.a, link.b):
                    problems.append(f"migration path of {dev} uses link {lid} not joining {dev} and {seg.target}")
    return problems


def dump_topology(t: Topology) -> str:
    """Deterministic text listing of nodes, links, rings and migration paths."""
    lines = [f"design {t.design.value} ({t.design.label})"]
    lines.append(f"nodes {len(t.nodes)}: " + " ".join(str(n) for n in t.nodes))
    lines.append(
        f"host sockets={t.host.socket_count} devices_per_socket={t.host.devices_per_socket} "
        f"socket_mem_bandwidth={t.host.socket_mem_bandwidth:g}"
    )
    cap = "unbounded" if t.unbounded_local_memory else f"{t.local_capacity_bytes:g}"
    lines.append(f"local_capacity {cap}")
    lines.append(f"links {len(t.links)}")
    for link in t.links:
        lines.append(f"  L{link.id} {link.a}-{link.b} {link.cls.value} bw={link.bandwidth:g} lat={link.hop_latency:g}")
    lines.append(f"rings {len(t.rings)}")
    for r, ring in enumerate(t.rings):
        path = " ".join(str(n) for n in ring.nodes)
        lines.append(f"  R{r} hops={ring.hop_count} nodes: {path}")
        lines.append(f"  R{r} links: " + " ".join(f"L{i}" for i in ring.links))
    lines.append(f"migration_paths {len(t.migration_paths)}")
    for dev in sorted(t.migration_paths, key=NodeId.sort_key):
        path = t.migration_paths[dev]
        segs = "; ".join(
            f"{s.side}->{s.target} links=" + ",".join(f"L{i}" for i in s.links) + f" bw={s.bandwidth:g}"
            for s in path.segments
        )
        lines.append(f"  {dev} policy={path.policy.value} {segs}")
    return "\n".join(lines) + "\n"


def build_single_ring(
    node_count: int, with_memory: bool = False, spec: DeviceSpec = DeviceSpec(), params: FabricParams = FabricParams()
) -> Topology:
    """One ring over ``node_count`` devices, optionally with a memory-node after each.

    Used for collective scaling studies where ring length is the variable.
    """
    if node_count < 2:
        raise FabricError(f"a ring needs at least 2 devices, got {node_count}")
    b = _Builder(spec, params)
    order: list[NodeId] = []
    for i in range(node_count):
        order.append(D(i))
        if with_memory:
            order.append(M(i))
    ring = b.ring(order)
    return Topology(
        design=Design.MC_RING_BW if with_memory else Design.DC,
        nodes=b.sorted_nodes(),
        links=tuple(b.links),
        rings=(ring,),
        device_spec=spec,
        host=_host_spec(node_count, params, params.dc_socket_bandwidth),
        migration_paths={},
        params=params,
        local_capacity_bytes=spec.local_mem_capacity_bytes,
    )
