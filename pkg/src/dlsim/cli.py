"""Command-line entry point.

    dlsim simulate --workload vgg_e --design dc,mc_ring_bw --parallelism data
    dlsim simulate --config experiment.json --batch-size 256
    dlsim reproduce fig12 --jobs 4
    dlsim validate experiment.json
    dlsim dump-topology mc_ring_bw

Outputs go to ``--output``, else the config's ``output``, else
``$DLSIM_OUTPUT_DIR``, else ``./dlsim-out``. Exit status: 0 on success, 1 for
configuration or usage errors, 2 when any simulation point failed.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config, parse_config, read_document
from .device import DeviceSpec
from .engine import pcie_gen_bandwidth
from .experiments import (
    REPRODUCE_TAGS,
    RESULT_COLUMNS,
    Bundle,
    Job,
    Table,
    build_rows,
    reproduce,
    run_jobs,
    with_baselines,
    write_bundle,
)
from .fabric import FabricError, build_design, dump_topology, parse_design, validate

log = logging.getLogger("dlsim")

EXIT_OK, EXIT_CONFIG, EXIT_SIM = 0, 1, 2
OUTPUT_ENV = "DLSIM_OUTPUT_DIR"


class _Parser(argparse.ArgumentParser):
    # usage mistakes count as configuration errors, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _csv_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _number(text: str):
    value = float(text)
    return int(value) if value.is_integer() else value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="dlsim", description="Deterministic simulator for device-, host- and memory-centric training systems."
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run a workload/design matrix")
    sim.add_argument("--config", type=Path, help="JSON experiment config; flags below override its values")
    sim.add_argument("--workload", type=_csv_list, help="comma-separated bundled names or JSON paths")
    sim.add_argument("--design", type=_csv_list, help="comma-separated design tags, e.g. dc,hc,mc_ring_bw")
    sim.add_argument("--parallelism", type=_csv_list, help="data, model or data,model")
    sim.add_argument("--batch-size", type=int)
    sim.add_argument("--device-count", type=int)
    sim.add_argument("--policy", choices=("LOCAL", "BW_AWARE"), help="page placement for mc_ring designs")
    sim.add_argument("--sweep-parameter", choices=("batchSize", "deviceCount", "linkBandwidth", "pcieGen"))
    sim.add_argument("--sweep-values", type=lambda s: [_number(v) for v in _csv_list(s)])
    sim.add_argument("--message-bytes", type=int)
    sim.add_argument(
        "--duplex-migration", action="store_true", default=None, help="give offload and prefetch separate link capacity"
    )
    sim.add_argument(
        "--no-recompute", action="store_true", default=None, help="never recompute cheap layers instead of migrating"
    )
    sim.add_argument("--trace", action="store_true", default=None, help="also write a per-run event trace")
    sim.add_argument("--output", type=Path)
    sim.add_argument("--jobs", type=int, help="worker processes (results are identical for any value)")

    rep = sub.add_parser("reproduce", help="run a curated experiment bundle")
    rep.add_argument("tag", choices=REPRODUCE_TAGS)
    rep.add_argument("--output", type=Path)
    rep.add_argument("--jobs", type=int, default=1)

    val = sub.add_parser("validate", help="check a config file without running it")
    val.add_argument("config", type=Path)

    top = sub.add_parser("dump-topology", help="print a design's nodes, links, rings and migration paths")
    top.add_argument("design")
    top.add_argument("--device-count", type=int, default=8)
    return p


def _overlay(doc: dict, args) -> dict:
    """Apply command-line flags on top of a config document."""
    doc = dict(doc)
    direct = {
        "workloads": args.workload,
        "designs": args.design,
        "parallelism": args.parallelism,
        "batchSize": args.batch_size,
        "deviceCount": args.device_count,
        "policy": args.policy,
        "output": None if args.output is None else str(args.output),
        "jobs": args.jobs,
    }
    doc.update({k: v for k, v in direct.items() if v is not None})
    if args.sweep_parameter is not None or args.sweep_values is not None:
        sweep = dict(doc.get("sweep") or {})
        if args.sweep_parameter is not None:
            sweep["parameter"] = args.sweep_parameter
        if args.sweep_values is not None:
            sweep["values"] = args.sweep_values
        doc["sweep"] = sweep
    engine = dict(doc.get("engine") or {})
    if args.message_bytes is not None:
        engine["messageBytes"] = args.message_bytes
    if args.duplex_migration:
        engine["duplexMigration"] = True
    if args.trace:
        engine["recordEvents"] = True
    if engine:
        doc["engine"] = engine
    if args.no_recompute:
        doc["plan"] = {**(doc.get("plan") or {}), "recompute": False}
    return doc


def _output_dir(explicit) -> Path:
    if explicit:
        return Path(explicit)
    return Path(os.environ.get(OUTPUT_ENV) or "dlsim-out")


def _point(cfg: ExperimentConfig, spec, params, parameter: str, value):
    """(batch, devices, spec, params) for one sweep value."""
    batch, devices = cfg.batch_size, cfg.device_count
    if parameter == "batchSize":
        batch = int(value)
    elif parameter == "deviceCount":
        devices = int(value)
    elif parameter == "linkBandwidth":
        spec = replace(spec, link_bandwidth=float(value))
    else:
        params = replace(params, pcie_bandwidth=pcie_gen_bandwidth(int(value)))
    return batch, devices, spec, params


def config_jobs(cfg: ExperimentConfig) -> list[Job]:
    """Expand a config into jobs: sweep point x parallelism x workload x design."""
    spec, params, memory = cfg.device_spec(), cfg.fabric_params(), cfg.memory_spec()
    points = [("", (cfg.batch_size, cfg.device_count, spec, params))]
    if cfg.sweep is not None:
        points = [
            (f"{cfg.sweep.parameter}={_number(str(v))}", _point(cfg, spec, params, cfg.sweep.parameter, v))
            for v in cfg.sweep.values
        ]
    jobs = []
    for label, (batch, devices, p_spec, p_params) in points:
        for par in cfg.parallelism:
            for w in cfg.workloads:
                for d in cfg.resolved_designs():
                    jobs.append(
                        Job(
                            w,
                            d.value,
                            par,
                            batch,
                            devices,
                            label,
                            p_spec,
                            p_params,
                            memory,
                            cfg.plan_options(),
                            cfg.engine_options(),
                        )
                    )
    return jobs


def _summary(rows: list[dict]) -> str:
    lines = ["Exposed time normalized to each row's DC total", ""]
    header = f"{'workload':12} {'design':14} {'par':5} {'point':18} " + " ".join(
        f"{name:>8}" for name in ("compute", "sync", "migr", "total", "speedup")
    )
    lines.append(header)
    for r in rows:
        if r["totalSeconds"] is None:
            lines.append(
                f"{r['workload']:12} {r['design']:14} {r['parallelism']:5} {r['point']:18} error: {r['error']}"
            )
            continue
        sp = r["speedupVsDC"]
        base = r["totalSeconds"] * sp if sp else r["totalSeconds"]
        cells = [r[c] / base for c in ("exposedCompute", "exposedSync", "exposedMigration", "totalSeconds")]
        lines.append(
            f"{r['workload']:12} {r['design']:14} {r['parallelism']:5} {r['point']:18} "
            + " ".join(f"{c:8.3f}" for c in cells)
            + (f" {sp:8.2f}" if sp else f" {'n/a':>8}")
        )
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    doc = read_document(args.config) if args.config else {}
    cfg = parse_config(_overlay(doc, args))
    jobs = config_jobs(cfg)
    log.info("running %d jobs on %d worker(s)", len(jobs), cfg.jobs)
    results = run_jobs(with_baselines(jobs), cfg.jobs)
    rows = build_rows(results)
    traces = {}
    if cfg.engine.record_events:
        for r in results:
            if r.result is not None and not r.job.hidden:
                j = r.job
                name = "_".join(
                    x for x in (Path(j.workload).stem, j.design, j.parallelism, j.point.replace("=", "-")) if x
                )
                traces[name] = r.result
    bundle = Bundle("results", [Table("results", "results", RESULT_COLUMNS, rows)], _summary(rows), traces)
    out = _output_dir(cfg.output)
    for path in write_bundle(bundle, out):
        log.info("wrote %s", path)
    sys.stdout.write(bundle.summary)
    failed = [r for r in rows if r["error"]]
    if failed:
        print(
            f"{len(failed)} of {len(rows)} points failed; see the error column in {out / 'results.csv'}",
            file=sys.stderr,
        )
        return EXIT_SIM
    return EXIT_OK


def cmd_reproduce(args) -> int:
    if args.jobs is not None and args.jobs < 1:
        raise ConfigError([f"jobs: must be >= 1, got {args.jobs}"])
    bundle = reproduce(args.tag, args.jobs)
    out = _output_dir(args.output)
    for path in write_bundle(bundle, out):
        log.info("wrote %s", path)
    sys.stdout.write(bundle.summary)
    errors = sum(1 for t in bundle.tables for r in t.rows if r.get("error"))
    return EXIT_SIM if errors else EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    jobs = config_jobs(cfg)
    print(f"{args.config}: ok ({len(jobs)} runs)")
    return EXIT_OK


def cmd_dump_topology(args) -> int:
    try:
        t = build_design(parse_design(args.design), args.device_count, DeviceSpec())
    except FabricError as exc:
        raise ConfigError([f"design: {exc}"]) from None
    problems = validate(t)
    sys.stdout.write(dump_topology(t))
    if problems:
        for msg in problems:
            print(f"invalid: {msg}", file=sys.stderr)
        return EXIT_SIM
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "reproduce": cmd_reproduce,
    "validate": cmd_validate,
    "dump-topology": cmd_dump_topology,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
