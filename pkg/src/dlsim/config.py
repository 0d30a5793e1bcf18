"""Experiment configuration documents.

A config is a JSON object with camelCase keys. Unknown keys are rejected so a
typo never silently falls back to a default. ``ConfigError`` carries one
``path: message`` line per problem, where ``path`` is the dotted location
inside the document (``device.linkBandwidth``, ``designs.2``).
"""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path
from typing import Annotated, Literal

from pydantic import (
    AfterValidator,
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)
from pydantic.alias_generators import to_camel

from .device import DeviceSpec
from .engine import EngineOptions
from .fabric import (
    DESIGN_ALIASES,
    Design,
    FabricError,
    FabricParams,
    MemoryNodeSpec,
    Policy,
    parse_design,
)
from .vmem import PlanOptions
from .workload import TrainingConfig, WorkloadError, bundled_workloads, load_network


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("\n".join(problems))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", alias_generator=to_camel, populate_by_name=True, frozen=True)


Positive = Field(default=None, gt=0)


class DeviceOverrides(_Strict):
    num_pes: int | None = Positive
    macs_per_pe: int | None = Positive
    freq_hz: float | None = Positive
    sram_per_pe_bytes: int | None = Positive
    local_mem_bandwidth: float | None = Positive
    local_mem_latency_cycles: int | None = Field(default=None, ge=0)
    local_mem_capacity_bytes: float | None = Positive
    link_count: int | None = Positive
    link_bandwidth: float | None = Positive
    mac_efficiency: float | None = Field(default=None, gt=0, le=1)


class MemoryNodeOverrides(_Strict):
    dimm_count: int | None = Positive
    dimm_capacity_bytes: float | None = Positive
    aggregate_bandwidth: float | None = Positive
    access_latency_cycles: int | None = Field(default=None, ge=0)
    groups: int | None = Positive


class FabricOverrides(_Strict):
    hop_latency: float | None = Field(default=None, ge=0)
    pcie_bandwidth: float | None = Positive
    pcie_shared: bool | None = None
    pcie_switches: int | None = Positive
    dc_socket_bandwidth: float | None = Positive
    hc_socket_bandwidth: float | None = Positive
    devices_per_socket: int | None = Positive


class SweepSpec(_Strict):
    parameter: Literal["batchSize", "deviceCount", "linkBandwidth", "pcieGen"]
    values: list[float] = Field(min_length=1)

    @field_validator("values")
    @classmethod
    def _positive(cls, values):
        for v in values:
            if not v > 0:
                raise ValueError("sweep values must be positive")
        return values

    @model_validator(mode="after")
    def _integral(self):
        if self.parameter != "linkBandwidth":
            for i, v in enumerate(self.values):
                if not float(v).is_integer():
                    raise ValueError(f"{self.parameter} values must be whole numbers; values.{i} is {v}")
        return self


class EngineSettings(_Strict):
    message_bytes: int = Field(default=4096, gt=0)
    duplex_migration: bool = False
    record_events: bool = False


class PlanSettings(_Strict):
    recompute: bool = True
    offload_weights: bool = False
    needed_only: bool = False


def _check_design(tag: str) -> str:
    try:
        parse_design(tag)
    except FabricError:
        known = sorted({d.value for d in Design} | set(DESIGN_ALIASES))
        raise ValueError(f"unknown design {tag!r}; known: {', '.join(known)}") from None
    return tag


def _check_workload(ref: str) -> str:
    bundled = bundled_workloads()
    if ref not in bundled and not Path(ref).is_file():
        raise ValueError(f"workload {ref!r} is neither bundled ({', '.join(bundled)}) nor an existing file")
    return ref


DesignTag = Annotated[str, AfterValidator(_check_design)]
WorkloadRef = Annotated[str, AfterValidator(_check_workload)]


class ExperimentConfig(_Strict):
    workloads: list[WorkloadRef] = Field(min_length=1)
    designs: list[DesignTag] = Field(default_factory=lambda: ["dc", "mc_ring_bw"], min_length=1)
    parallelism: list[Literal["data", "model"]] = Field(default_factory=lambda: ["data"], min_length=1)
    batch_size: int = Field(default=512, gt=0)
    device_count: int = Field(default=8, gt=0)
    policy: Literal["LOCAL", "BW_AWARE"] | None = None
    device: DeviceOverrides = DeviceOverrides()
    memory_node: MemoryNodeOverrides = MemoryNodeOverrides()
    fabric: FabricOverrides = FabricOverrides()
    sweep: SweepSpec | None = None
    engine: EngineSettings = EngineSettings()
    plan: PlanSettings = PlanSettings()
    output: str | None = None
    jobs: int = Field(default=1, ge=1)

    # -- conversion to simulator objects -------------------------------------

    def resolved_designs(self) -> list[Design]:
        out = []
        for tag in self.designs:
            d = parse_design(tag)
            if self.policy is not None and d in (Design.MC_RING_LOCAL, Design.MC_RING_BW):
                d = Design.MC_RING_LOCAL if Policy(self.policy) is Policy.LOCAL else Design.MC_RING_BW
            out.append(d)
        return list(dict.fromkeys(out))

    def device_spec(self) -> DeviceSpec:
        return replace(DeviceSpec(), **self.device.model_dump(exclude_none=True))

    def memory_spec(self) -> MemoryNodeSpec:
        return replace(MemoryNodeSpec(), **self.memory_node.model_dump(exclude_none=True))

    def fabric_params(self) -> FabricParams:
        return replace(FabricParams(), **self.fabric.model_dump(exclude_none=True))

    def training(
        self, parallelism: str, batch_size: int | None = None, device_count: int | None = None
    ) -> TrainingConfig:
        return TrainingConfig(
            batch_size=self.batch_size if batch_size is None else batch_size,
            parallelism=parallelism,
            device_count=self.device_count if device_count is None else device_count,
        )

    def engine_options(self) -> EngineOptions:
        return EngineOptions(**self.engine.model_dump())

    def plan_options(self) -> PlanOptions:
        return PlanOptions(**self.plan.model_dump())

    def load_workloads(self):
        return [load_network(w) for w in self.workloads]


def _loc(loc: tuple) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def _msg(err: dict) -> str:
    msg = err["msg"]
    return msg.removeprefix("Value error, ")


def parse_config(doc) -> ExperimentConfig:
    """Validate a config mapping; raise ``ConfigError`` listing every bad field."""
    if not isinstance(doc, dict):
        raise ConfigError([f"<root>: expected a JSON object, got {type(doc).__name__}"])
    try:
        cfg = ExperimentConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError([f"{_loc(e['loc'])}: {_msg(e)}" for e in exc.errors()]) from None
    problems = []
    if "data" in cfg.parallelism and cfg.sweep is None and cfg.batch_size % cfg.device_count:
        problems.append(f"batchSize: {cfg.batch_size} is not divisible by deviceCount {cfg.device_count}")
    for i, w in enumerate(cfg.workloads):
        try:
            load_network(w)
        except (WorkloadError, OSError, json.JSONDecodeError) as exc:
            problems.append(f"workloads.{i}: {exc}")
    for name, build in (("device", cfg.device_spec), ("memoryNode", cfg.memory_spec), ("fabric", cfg.fabric_params)):
        try:
            build()
        except ValueError as exc:
            problems.append(f"{name}: {exc}")
    if problems:
        raise ConfigError(problems)
    return cfg


def read_document(path: str | Path) -> dict:
    """Read a JSON config file into a mapping, as ``ConfigError`` on failure."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"<file>: cannot read {path}: {exc.strerror}"]) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<file>: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"]) from None
    if not isinstance(doc, dict):
        raise ConfigError([f"<root>: expected a JSON object, got {type(doc).__name__}"])
    return doc


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(read_document(path))
