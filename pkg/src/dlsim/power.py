"""Memory-node power accounting and performance-per-watt.

Only memory-node TDP is modeled. Device nodes and the rest of the chassis are
folded into a fixed baseline system TDP. DIMM figures are held as ``Decimal``
so derived node wattages (10 x 2.9 W = 29 W) print without float noise.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum

BASELINE_SYSTEM_WATTS = Decimal(3200)
DIMMS_PER_NODE = 10
DEFAULT_MEMORY_NODES = 8


class DimmKind(str, Enum):
    RDIMM8 = "RDIMM8"
    RDIMM16 = "RDIMM16"
    LRDIMM32 = "LRDIMM32"
    LRDIMM64 = "LRDIMM64"
    LRDIMM128 = "LRDIMM128"


@dataclass(frozen=True)
class DimmSpec:
    kind: DimmKind
    capacity_gb: int
    tdp_watts: Decimal
    label: str

    @property
    def capacity_bytes(self) -> int:
        return self.capacity_gb * 2**30


DIMM_TABLE: dict[DimmKind, DimmSpec] = {
    d.kind: d
    for d in (
        DimmSpec(DimmKind.RDIMM8, 8, Decimal("2.9"), "8 GB RDIMM"),
        DimmSpec(DimmKind.RDIMM16, 16, Decimal("6.6"), "16 GB RDIMM"),
        DimmSpec(DimmKind.LRDIMM32, 32, Decimal("8.7"), "32 GB LRDIMM"),
        DimmSpec(DimmKind.LRDIMM64, 64, Decimal("10.2"), "64 GB LRDIMM"),
        DimmSpec(DimmKind.LRDIMM128, 128, Decimal("12.7"), "128 GB LRDIMM"),
    )
}


def dimm(kind) -> DimmSpec:
    """Look up a DIMM by kind or by its string tag (``"LRDIMM128"``)."""
    try:
        return DIMM_TABLE[DimmKind(kind)]
    except ValueError:
        raise ValueError(f"unknown DIMM kind {kind!r}; expected one of {[k.value for k in DimmKind]}") from None


@dataclass(frozen=True)
class NodePower:
    watts: Decimal
    capacity_gb: int

    @property
    def gb_per_watt(self) -> Decimal:
        return Decimal(self.capacity_gb) / self.watts


def memory_node_power(spec: DimmSpec, count: int = DIMMS_PER_NODE) -> NodePower:
    if count < 1:
        raise ValueError("a memory node needs at least one DIMM")
    return NodePower(watts=spec.tdp_watts * count, capacity_gb=spec.capacity_gb * count)


@dataclass(frozen=True)
class SystemPowerReport:
    dimm: DimmKind
    memory_nodes: int
    per_memory_node_watts: Decimal
    added_watts: Decimal
    baseline_watts: Decimal
    relative_increase: Decimal
    gb_per_watt: Decimal
    perf_per_watt_gain: float | None = None


def system_power_delta(
    spec: DimmSpec,
    memory_node_count: int = DEFAULT_MEMORY_NODES,
    baseline_watts=BASELINE_SYSTEM_WATTS,
    speedup: float | None = None,
) -> SystemPowerReport:
    if memory_node_count < 0:
        raise ValueError("memory_node_count must be non-negative")
    baseline = Decimal(baseline_watts)
    if baseline <= 0:
        raise ValueError("baseline_watts must be positive")
    node = memory_node_power(spec)
    added = node.watts * memory_node_count
    rel = added / baseline
    gain = None if speedup is None else perf_per_watt(speedup, float(rel))
    return SystemPowerReport(
        dimm=spec.kind,
        memory_nodes=memory_node_count,
        per_memory_node_watts=node.watts,
        added_watts=added,
        baseline_watts=baseline,
        relative_increase=rel,
        gb_per_watt=node.gb_per_watt,
        perf_per_watt_gain=gain,
    )


def perf_per_watt(speedup: float, relative_increase: float) -> float:
    """Speedup divided by the relative rise in system power."""
    if relative_increase <= -1:
        raise ValueError("relative_increase must be greater than -1")
    return speedup / (1.0 + relative_increase)


def _fmt(value: Decimal, places: str = "0.1") -> str:
    q = value.quantize(Decimal(places), rounding=ROUND_HALF_UP)
    text = format(q, "f")
    # drop a trailing ".0" so whole watt figures print as integers
    return text[:-2] if text.endswith(".0") else text


TABLE4_COLUMNS = ("module", "dimm_tdp_w", "node_tdp_w", "node_gb_per_w")


def table4_rows(count: int = DIMMS_PER_NODE) -> list[dict[str, str]]:
    rows = []
    for spec in DIMM_TABLE.values():
        node = memory_node_power(spec, count)
        rows.append(
            {
                "module": spec.label,
                "dimm_tdp_w": _fmt(spec.tdp_watts),
                "node_tdp_w": _fmt(node.watts),
                "node_gb_per_w": format(node.gb_per_watt.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP), "f"),
            }
        )
    return rows


def table4_csv(count: int = DIMMS_PER_NODE) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TABLE4_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(table4_rows(count))
    return buf.getvalue()


def delta_rows(
    memory_node_count: int = DEFAULT_MEMORY_NODES,
    baseline_watts=BASELINE_SYSTEM_WATTS,
    speedup: float = 2.8,
) -> list[dict[str, str]]:
    """System-level delta for every DIMM option, with perf/W for ``speedup``."""
    rows = []
    for spec in DIMM_TABLE.values():
        r = system_power_delta(spec, memory_node_count, baseline_watts, speedup)
        rows.append(
            {
                "dimm": spec.kind.value,
                "memory_nodes": str(r.memory_nodes),
                "added_w": _fmt(r.added_watts),
                "relative_increase_pct": format((r.relative_increase * 100).quantize(Decimal("0.01")), "f"),
                "pool_gb": str(spec.capacity_gb * DIMMS_PER_NODE * memory_node_count),
                "perf_per_watt": f"{r.perf_per_watt_gain:.2f}",
            }
        )
    return rows
