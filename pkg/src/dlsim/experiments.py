"""Experiment orchestration: job matrices, result rows and the reproduce bundles.

Every run is described by a picklable ``Job``. Jobs may execute in worker
processes, but results are always merged back in job order, so CSV output is
identical whatever the worker count.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

from . import power
from .collectives import CollectiveKind, CollectiveRequest, bandwidth_optimal_seconds, collective_time, usable_rings
from .device import DeviceSpec
from .engine import (
    BreakdownResult,
    EngineOptions,
    dump_events,
    harmonic_mean,
    run_design,
)
from .fabric import Design, FabricParams, MemoryNodeSpec, build_design, build_single_ring, parse_design
from .vmem import PlanOptions
from .workload import TrainingConfig, bundled_workloads, load_network

# designs of the main comparison, in report order
MAIN_DESIGNS = (
    Design.DC,
    Design.HC,
    Design.MC_FOLDED,
    Design.MC_RING_LOCAL,
    Design.MC_RING_BW,
    Design.ORACLE,
)
CNN_WORKLOADS = ("alexnet", "googlenet", "vgg_e", "resnet")
BATCH_SWEEP = (64, 128, 256, 512)
FIG9_NODES = (2, 4, 8, 16)
FIG9_SIZES = (("message", 4 * 1024), ("sync", 8 * 2**20), ("large", 64 * 2**20))
SCALING_PER_DEVICE_BATCH = 64
REPRODUCE_TAGS = ("fig9", "fig10", "fig11", "fig12", "fig13", "table4", "scaling54")


@dataclass(frozen=True)
class Job:
    workload: str
    design: str
    parallelism: str
    batch: int
    devices: int
    point: str = ""
    spec: DeviceSpec = DeviceSpec()
    params: FabricParams = FabricParams()
    memory: MemoryNodeSpec = MemoryNodeSpec()
    plan: PlanOptions = PlanOptions()
    engine: EngineOptions = EngineOptions()
    hidden: bool = False  # run only as a speedup baseline, not emitted

    @property
    def group(self) -> tuple:
        return (self.workload, self.parallelism, self.point)


@dataclass
class JobResult:
    job: Job
    result: BreakdownResult | None = None
    error: str = ""


_DAGS: dict = {}


def _dag(ref: str):
    if ref not in _DAGS:
        _DAGS[ref] = load_network(ref)
    return _DAGS[ref]


def execute(job: Job) -> JobResult:
    """Run one job, turning model errors into a recorded message."""
    try:
        cfg = TrainingConfig(batch_size=job.batch, parallelism=job.parallelism, device_count=job.devices)
        t = build_design(job.design, job.devices, job.spec, job.params, job.memory)
        res = run_design(_dag(job.workload), cfg, t, plan_options=job.plan, engine_options=job.engine)
        return JobResult(job, res)
    except (ValueError, RuntimeError, OverflowError) as exc:
        return JobResult(job, None, f"{type(exc).__name__}: {exc}")


def run_jobs(jobs: Sequence[Job], workers: int = 1) -> list[JobResult]:
    if workers <= 1 or len(jobs) < 2:
        return [execute(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(execute, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def with_baselines(jobs: Sequence[Job]) -> list[Job]:
    """Append hidden DC jobs for every group that lacks one."""
    have = {j.group for j in jobs if j.design == Design.DC.value}
    extra = {}
    for j in jobs:
        if j.group not in have and j.group not in extra:
            extra[j.group] = replace(j, design=Design.DC.value, hidden=True)
    return [*jobs, *extra.values()]


# -- result rows -------------------------------------------------------------------

RESULT_COLUMNS = (
    "workload",
    "design",
    "parallelism",
    "batch",
    "devices",
    "point",
    "totalSeconds",
    "exposedCompute",
    "exposedSync",
    "exposedMigration",
    "speedupVsDC",
    "hostBWAvg",
    "hostBWPeak",
    "perLinkUtilMax",
    "bytesOffloaded",
    "bytesPrefetched",
    "error",
)


def build_rows(results: Sequence[JobResult]) -> list[dict]:
    dc_total = {
        r.job.group: r.result.total_seconds for r in results if r.job.design == Design.DC.value and r.result is not None
    }
    rows = []
    for r in results:
        if r.job.hidden:
            continue
        j, res = r.job, r.result
        row = {
            "workload": j.workload,
            "design": j.design,
            "parallelism": j.parallelism,
            "batch": j.batch,
            "devices": j.devices,
            "point": j.point,
        }
        if res is None:
            row.update({c: None for c in RESULT_COLUMNS[6:-1]})
        else:
            base = dc_total.get(j.group)
            row.update(
                totalSeconds=res.total_seconds,
                exposedCompute=res.exposed_compute_seconds,
                exposedSync=res.exposed_sync_seconds,
                exposedMigration=res.exposed_migration_seconds,
                speedupVsDC=None if base is None else base / res.total_seconds,
                hostBWAvg=res.host_bandwidth_avg,
                hostBWPeak=res.host_bandwidth_peak,
                perLinkUtilMax=res.max_link_utilization,
                bytesOffloaded=res.bytes_moved.get("localToRemote", 0),
                bytesPrefetched=res.bytes_moved.get("remoteToLocal", 0),
            )
        row["error"] = r.error
        rows.append(row)
    return rows


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_csv(columns: Sequence[str], rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def to_json(columns: Sequence[str], rows: Sequence[dict]) -> str:
    ordered = [{c: row.get(c) for c in columns} for row in rows]
    return json.dumps(ordered, indent=1, allow_nan=False) + "\n"


# CSV schemas: column -> parser; a cell is valid if the parser accepts it
def _opt(parse: Callable) -> Callable:
    return lambda s: None if s == "" else parse(s)


def _finite(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {s!r}")
    return v


def _design_tag(s: str) -> str:
    return parse_design(s).value


_RESULT_SCHEMA = {
    "workload": str,
    "design": _design_tag,
    "parallelism": lambda s: {"data": s, "model": s}[s],
    "batch": int,
    "devices": int,
    "point": str,
    "totalSeconds": _opt(_finite),
    "exposedCompute": _opt(_finite),
    "exposedSync": _opt(_finite),
    "exposedMigration": _opt(_finite),
    "speedupVsDC": _opt(_finite),
    "hostBWAvg": _opt(_finite),
    "hostBWPeak": _opt(_finite),
    "perLinkUtilMax": _opt(_finite),
    "bytesOffloaded": _opt(int),
    "bytesPrefetched": _opt(int),
    "error": str,
}

FIG9_COLUMNS = (
    "nodes",
    "ring",
    "kind",
    "syncBytes",
    "messageBytes",
    "steps",
    "seconds",
    "boundSeconds",
    "boundRatio",
    "ratioVsDeviceRing",
)
_FIG9_SCHEMA = {
    "nodes": int,
    "ring": lambda s: {"device": s, "memory": s}[s],
    "kind": lambda s: CollectiveKind(s).value,
    "syncBytes": int,
    "messageBytes": int,
    "steps": int,
    "seconds": _finite,
    "boundSeconds": _finite,
    "boundRatio": _finite,
    "ratioVsDeviceRing": _finite,
}
_TABLE4_SCHEMA = {"module": str, "dimm_tdp_w": _finite, "node_tdp_w": _finite, "node_gb_per_w": _finite}
DELTA_COLUMNS = ("dimm", "memory_nodes", "added_w", "relative_increase_pct", "pool_gb", "perf_per_watt")
_DELTA_SCHEMA = {
    "dimm": lambda s: power.DimmKind(s).value,
    "memory_nodes": int,
    "added_w": _finite,
    "relative_increase_pct": _finite,
    "pool_gb": int,
    "perf_per_watt": _finite,
}

SCHEMAS = {
    "results": _RESULT_SCHEMA,
    "fig9": _FIG9_SCHEMA,
    "table4": _TABLE4_SCHEMA,
    "table4_deltas": _DELTA_SCHEMA,
}


def check_csv(text: str, schema: dict | str) -> list[str]:
    """Problems found in a CSV document against ``schema`` (empty when valid).

    ``schema`` is a column -> parser mapping or a key of ``SCHEMAS``.
    """
    if isinstance(schema, str):
        schema = SCHEMAS[schema]
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return ["empty document"]
    header, body = rows[0], rows[1:]
    if tuple(header) != tuple(schema):
        return [f"header {header} != {list(schema)}"]
    problems = []
    for n, row in enumerate(body, start=2):
        if len(row) != len(header):
            problems.append(f"line {n}: {len(row)} cells, expected {len(header)}")
            continue
        for col, cell in zip(header, row):
            try:
                schema[col](cell)
            except (ValueError, KeyError) as exc:
                problems.append(f"line {n} column {col}: {exc}")
    return problems


# -- reproduce bundles ---------------------------------------------------------------


@dataclass
class Table:
    stem: str
    schema: str
    columns: Sequence[str]
    rows: list[dict]


@dataclass
class Bundle:
    tag: str
    tables: list[Table]
    summary: str
    traces: dict = field(default_factory=dict)


def _fmt(x, digits=3) -> str:
    return "n/a" if x is None else f"{x:.{digits}f}"


def _md_table(header: Sequence[str], body: Sequence[Sequence]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(str(c) for c in r) + " |" for r in body]
    return "\n".join(lines) + "\n"


def matrix_jobs(
    workloads=None, designs=MAIN_DESIGNS, parallelisms=("data", "model"), batch=512, devices=8
) -> list[Job]:
    workloads = bundled_workloads() if workloads is None else workloads
    return [
        Job(w, parse_design(d).value, par, batch, devices) for par in parallelisms for w in workloads for d in designs
    ]


def _index(rows: Sequence[dict]) -> dict:
    return {(r["workload"], r["parallelism"], r["point"], r["design"]): r for r in rows}


def _matrix_rows(workers: int) -> list[dict]:
    return build_rows(run_jobs(matrix_jobs(), workers))


def _speedup_summary(rows: list[dict]) -> str:
    idx = _index(rows)
    workloads = bundled_workloads()
    out = ["# Speedup over DC (8 devices, batch 512)\n"]
    hm = {}
    for par in ("data", "model"):
        body = []
        for w in workloads:
            body.append([w] + [_fmt(idx[(w, par, "", d.value)]["speedupVsDC"], 2) for d in MAIN_DESIGNS])
        means = []
        for d in MAIN_DESIGNS:
            vals = [idx[(w, par, "", d.value)]["speedupVsDC"] for w in workloads]
            ok = [v for v in vals if v is not None]
            hm[(par, d)] = harmonic_mean(ok) if len(ok) == len(vals) else None
            means.append(_fmt(hm[(par, d)], 2))
        body.append(["harmonic mean"] + means)
        out.append(f"## {par}-parallel\n")
        out.append(_md_table(["workload"] + [d.label for d in MAIN_DESIGNS], body))
    target = {"data": 3.5, "model": 2.1}
    body = []
    for par in ("data", "model"):
        mcb, mcl = hm[(par, Design.MC_RING_BW)], hm[(par, Design.MC_RING_LOCAL)]
        ratios = [
            idx[(w, par, "", Design.ORACLE.value)]["totalSeconds"]
            / idx[(w, par, "", Design.MC_RING_BW.value)]["totalSeconds"]
            for w in workloads
        ]
        body.append(
            [
                par,
                _fmt(mcb, 2),
                target[par],
                _fmt(None if mcb is None else mcl / mcb, 3),
                0.96,
                f"{min(ratios):.3f}..{max(ratios):.3f}",
                "0.84..0.99",
            ]
        )
    out.append("## Side by side with the target numbers\n")
    out.append(
        _md_table(
            [
                "parallelism",
                "MC-B/DC (ours)",
                "MC-B/DC (target)",
                "MC-L/MC-B (ours)",
                "MC-L/MC-B (target)",
                "MC-B/oracle range (ours)",
                "MC-B/oracle range (target)",
            ],
            body,
        )
    )
    return "\n".join(out)


def _breakdown_summary(rows: list[dict]) -> str:
    idx = _index(rows)
    out = ["# Exposed-time breakdown normalized to DC total\n"]
    for par in ("data", "model"):
        body = []
        for w in bundled_workloads():
            base = idx[(w, par, "", Design.DC.value)]["totalSeconds"]
            for d in MAIN_DESIGNS:
                r = idx[(w, par, "", d.value)]
                if r["totalSeconds"] is None:
                    body.append([w, d.label, "error", "", "", ""])
                    continue
                body.append(
                    [w, d.label]
                    + [_fmt(r[c] / base) for c in ("exposedCompute", "exposedSync", "exposedMigration", "totalSeconds")]
                )
        out.append(f"## {par}-parallel\n")
        out.append(_md_table(["workload", "design", "compute", "sync", "migration", "total"], body))
    mig, syn = [], []
    for par in ("data", "model"):
        for w in bundled_workloads():
            dc, hc = idx[(w, par, "", "dc")], idx[(w, par, "", "hc")]
            if dc["exposedMigration"]:
                mig.append(1 - hc["exposedMigration"] / dc["exposedMigration"])
            if dc["exposedSync"]:
                syn.append(hc["exposedSync"] / dc["exposedSync"] - 1)
    out.append("## HC relative to DC\n")
    out.append(
        _md_table(
            ["metric", "ours (mean)", "target"],
            [
                ["migration exposure reduction", _fmt(sum(mig) / len(mig)), "0.88"],
                ["sync exposure increase", _fmt(sum(syn) / len(syn)), "0.90"],
            ],
        )
    )
    return "\n".join(out)


def _host_summary(rows: list[dict]) -> str:
    idx = _index(rows)
    out = ["# Host (CPU) memory bandwidth usage, GB/s\n"]
    caps = {"dc": 2 * FabricParams().dc_socket_bandwidth, "hc": 2 * FabricParams().hc_socket_bandwidth}
    for par in ("data", "model"):
        body = []
        for d in (Design.DC, Design.HC):
            avg = [idx[(w, par, "", d.value)]["hostBWAvg"] for w in bundled_workloads()]
            peak = [idx[(w, par, "", d.value)]["hostBWPeak"] for w in bundled_workloads()]
            cap = caps[d.value]
            body.append(
                [
                    d.label,
                    _fmt(sum(avg) / len(avg) / 1e9, 1),
                    _fmt(max(peak) / 1e9, 1),
                    _fmt(cap / 1e9, 0),
                    _fmt(sum(avg) / len(avg) / cap, 3),
                ]
            )
        out.append(f"## {par}-parallel\n")
        out.append(_md_table(["design", "mean avg", "max peak", "socket cap (2 sockets)", "mean avg / cap"], body))
    out.append("Memory-centric designs and the oracle place no traffic on the host.\n")
    return "\n".join(out)


def reproduce_fig9() -> Bundle:
    rows = []
    for n in FIG9_NODES:
        rings = {"device": build_single_ring(n), "memory": build_single_ring(n, with_memory=True)}
        for _, size in FIG9_SIZES:
            base = None
            for name, t in rings.items():
                parts = tuple(t.devices)
                cost = collective_time(t, CollectiveRequest(CollectiveKind.ALL_REDUCE, parts, size, 4096))
                sched = usable_rings(t, parts)
                bound = bandwidth_optimal_seconds(CollectiveKind.ALL_REDUCE, n, size, len(sched), sched[0].bandwidth)
                base = cost.seconds if base is None else base
                rows.append(
                    {
                        "nodes": n,
                        "ring": name,
                        "kind": CollectiveKind.ALL_REDUCE.value,
                        "syncBytes": size,
                        "messageBytes": 4096,
                        "steps": cost.steps,
                        "seconds": cost.seconds,
                        "boundSeconds": bound,
                        "boundRatio": cost.seconds / bound,
                        "ratioVsDeviceRing": cost.seconds / base,
                    }
                )
    body = []
    for r in rows:
        if r["ring"] == "memory":
            body.append(
                [
                    r["nodes"],
                    r["syncBytes"],
                    _fmt(r["seconds"] * 1e6, 2),
                    _fmt(r["ratioVsDeviceRing"]),
                    _fmt(r["boundRatio"]),
                ]
            )
    summary = "# Ring all-reduce latency, device ring vs device+memory ring\n\n" + _md_table(
        ["devices", "sync bytes", "memory ring (us)", "memory/device ratio", "memory ring / bandwidth bound"], body
    )
    summary += (
        "\nInterleaving memory-nodes doubles hop count. The extra hops cost latency that a 4 KiB sync"
        " cannot amortize; at 8 MiB and above the ratio approaches 1.\n"
    )
    return Bundle("fig9", [Table("fig9", "fig9", FIG9_COLUMNS, rows)], summary)


MAC_EFFICIENCIES = (0.5, 0.75, 1.0)


def efficiency_jobs() -> list[Job]:
    """DC and MC-B over the full workload set at each MAC efficiency."""
    jobs = []
    for eta in MAC_EFFICIENCIES:
        spec = replace(DeviceSpec(), mac_efficiency=eta)
        for par in ("data", "model"):
            for w in bundled_workloads():
                for d in (Design.DC, Design.MC_RING_BW):
                    jobs.append(Job(w, d.value, par, 512, 8, f"macEfficiency={eta}", spec=spec))
    return jobs


def _efficiency_summary(rows: list[dict]) -> str:
    idx = _index(rows)
    body = []
    for eta in MAC_EFFICIENCIES:
        cells = [str(eta)]
        for par in ("data", "model"):
            sp = [idx[(w, par, f"macEfficiency={eta}", "mc_ring_bw")]["speedupVsDC"] for w in bundled_workloads()]
            cells.append(_fmt(harmonic_mean(sp), 2) if None not in sp else "n/a")
        body.append(cells)
    return "## Sensitivity to MAC efficiency (harmonic-mean MC-B/DC)\n\n" + _md_table(
        ["macEfficiency", "data", "model"], body
    )


def reproduce_matrix(tag: str, workers: int = 1) -> Bundle:
    rows = _matrix_rows(workers)
    summary = {"fig10": _breakdown_summary, "fig11": _host_summary, "fig12": _speedup_summary}[tag](rows)
    tables = [Table(tag, "results", RESULT_COLUMNS, rows)]
    if tag == "fig12":
        sens = build_rows(run_jobs(efficiency_jobs(), workers))
        summary += "\n" + _efficiency_summary(sens)
        tables.append(Table("fig12_sensitivity", "results", RESULT_COLUMNS, sens))
    return Bundle(tag, tables, summary)


def reproduce_fig13(workers: int = 1) -> Bundle:
    jobs = []
    for par in ("data", "model"):
        for w in bundled_workloads():
            for b in BATCH_SWEEP:
                for d in (Design.DC, Design.MC_RING_BW):
                    jobs.append(Job(w, d.value, par, b, 8, f"batchSize={b}"))
            for d in (Design.DC, Design.MC_RING_BW):
                jobs.append(
                    Job(w, d.value, par, 512, 8, "pcieGen=4", params=replace(FabricParams(), pcie_bandwidth=32e9))
                )
    rows = build_rows(run_jobs(jobs, workers))
    idx = _index(rows)
    out = ["# MC-B speedup over DC across batch sizes\n"]
    for par in ("data", "model"):
        body, all_sp = [], []
        for w in bundled_workloads():
            sp = [idx[(w, par, f"batchSize={b}", "mc_ring_bw")]["speedupVsDC"] for b in BATCH_SWEEP]
            all_sp += [s for s in sp if s is not None]
            body.append([w] + [_fmt(s, 2) for s in sp])
        out.append(f"## {par}-parallel (harmonic mean over all points {_fmt(harmonic_mean(all_sp), 2)}; target 2.17)\n")
        out.append(_md_table(["workload"] + [str(b) for b in BATCH_SWEEP], body))
    body = []
    for par in ("data", "model"):
        gain, gap3, gap4 = [], [], []
        for w in bundled_workloads():
            dc3 = idx[(w, par, "batchSize=512", "dc")]["totalSeconds"]
            dc4 = idx[(w, par, "pcieGen=4", "dc")]["totalSeconds"]
            gain.append(dc3 / dc4)
            gap3.append(idx[(w, par, "batchSize=512", "mc_ring_bw")]["speedupVsDC"])
            gap4.append(idx[(w, par, "pcieGen=4", "mc_ring_bw")]["speedupVsDC"])
        body.append([par, _fmt(harmonic_mean(gain) - 1), _fmt(harmonic_mean(gap3), 2), _fmt(harmonic_mean(gap4), 2)])
    out.append("## DC with PCIe gen4 (target: DC improves 38%, gap 2.8x to 2.1x)\n")
    out.append(_md_table(["parallelism", "DC gain", "MC-B/DC gen3", "MC-B/DC gen4"], body))
    return Bundle("fig13", [Table("fig13", "results", RESULT_COLUMNS, rows)], "\n".join(out))


def reproduce_table4() -> Bundle:
    t4 = power.table4_rows()
    deltas = power.delta_rows()
    summary = "# Memory-node power (10 DIMMs per node)\n\n" + _md_table(
        power.TABLE4_COLUMNS, [list(r.values()) for r in t4]
    )
    summary += "\n# System delta with 8 memory-nodes over a 3200 W baseline, perf/W at 2.8x speedup\n\n"
    summary += _md_table(DELTA_COLUMNS, [list(r.values()) for r in deltas])
    rounded = [(pct, power.perf_per_watt(2.8, pct)) for pct in (0.31, 0.07)]
    summary += "\nWith the relative increases rounded to whole percent (31%, 7%): "
    summary += ", ".join(f"{p:.0%} -> {v:.2f}" for p, v in rounded) + ".\n"
    return Bundle(
        "table4",
        [
            Table("table4", "table4", power.TABLE4_COLUMNS, t4),
            Table("table4_deltas", "table4_deltas", DELTA_COLUMNS, deltas),
        ],
        summary,
    )


def scaling_jobs() -> list[Job]:
    """Weak scaling: a fixed per-device batch on 4 and 8 devices."""
    shared = replace(FabricParams(), pcie_shared=True)
    jobs = []
    for w in CNN_WORKLOADS:
        for n in (4, 8):
            b = SCALING_PER_DEVICE_BATCH * n
            for d, params in (
                (Design.DC, shared),
                (Design.MC_RING_BW, FabricParams()),
                (Design.ORACLE, FabricParams()),
            ):
                jobs.append(Job(w, d.value, "data", b, n, f"deviceCount={n}", params=params))
    return jobs


def scaling_ratios(rows: Sequence[dict]) -> dict:
    """(workload, design) -> throughput(8 devices) / throughput(4 devices)."""
    idx = _index(rows)
    out = {}
    for w in CNN_WORKLOADS:
        for d in (Design.DC, Design.MC_RING_BW, Design.ORACLE):
            r4 = idx[(w, "data", "deviceCount=4", d.value)]
            r8 = idx[(w, "data", "deviceCount=8", d.value)]
            if r4["totalSeconds"] and r8["totalSeconds"]:
                out[(w, d.value)] = (r8["batch"] / r8["totalSeconds"]) / (r4["batch"] / r4["totalSeconds"])
    return out


def reproduce_scaling54(workers: int = 1) -> Bundle:
    rows = build_rows(run_jobs(scaling_jobs(), workers))
    ratios = scaling_ratios(rows)
    body = [
        [w] + [_fmt(ratios.get((w, d.value)), 2) for d in (Design.DC, Design.MC_RING_BW, Design.ORACLE)]
        for w in CNN_WORKLOADS
    ]
    mean = {
        d: sum(ratios[(w, d.value)] for w in CNN_WORKLOADS) / len(CNN_WORKLOADS) for d in (Design.DC, Design.MC_RING_BW)
    }
    summary = "# Data-parallel throughput gain from 4 to 8 devices (64 samples per device)\n\n"
    summary += "DC devices share one PCIe switch uplink per pair; linear scaling is 2.00.\n\n"
    summary += _md_table(["workload", "DC", "MC-B", "oracle"], body)
    summary += (
        f"\nMean: DC {mean[Design.DC]:.2f}, MC-B {mean[Design.MC_RING_BW]:.2f}"
        " (target: DC 1.3x to 2.7x of one device, MC near-linear).\n"
    )
    return Bundle("scaling54", [Table("scaling54", "results", RESULT_COLUMNS, rows)], summary)


def reproduce(tag: str, workers: int = 1) -> Bundle:
    if tag == "fig9":
        return reproduce_fig9()
    if tag in ("fig10", "fig11", "fig12"):
        return reproduce_matrix(tag, workers)
    if tag == "fig13":
        return reproduce_fig13(workers)
    if tag == "table4":
        return reproduce_table4()
    if tag == "scaling54":
        return reproduce_scaling54(workers)
    raise ValueError(f"unknown reproduce tag {tag!r}; expected one of {', '.join(REPRODUCE_TAGS)}")


def write_bundle(bundle: Bundle, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for table in bundle.tables:
        text = to_csv(table.columns, table.rows)
        problems = check_csv(text, table.schema)
        if problems:
            # a writer bug, not a user error: refuse to leave a malformed file behind
            raise RuntimeError(f"{table.stem}.csv does not match schema {table.schema}: {problems[:3]}")
        for suffix, text in ((".csv", text), (".json", to_json(table.columns, table.rows))):
            path = out_dir / f"{table.stem}{suffix}"
            path.write_text(text)
            written.append(path)
    path = out_dir / f"{bundle.tag}.md"
    path.write_text(bundle.summary)
    written.append(path)
    for name, result in bundle.traces.items():
        path = out_dir / f"{name}.events.tsv"
        path.write_text(dump_events(result))
        written.append(path)
    return written
