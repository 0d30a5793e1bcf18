"""Analytical compute-time model of one accelerator device-node.

Each layer phase is costed with a roofline: the slower of MAC throughput
(derated by ``mac_efficiency``) and local-memory traffic, plus one fixed
memory-latency term per layer. Double-buffered PE SRAM hides the cheaper side.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .workload import TensorFootprint


class Phase(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass(frozen=True)
class DeviceSpec:
    num_pes: int = 1024
    macs_per_pe: int = 125
    freq_hz: float = 1e9
    sram_per_pe_bytes: int = 32 * 1024
    local_mem_bandwidth: float = 900e9
    local_mem_latency_cycles: int = 100
    local_mem_capacity_bytes: float = 16e9
    link_count: int = 6
    link_bandwidth: float = 25e9
    mac_efficiency: float = 0.75

    def __post_init__(self):
        for name in (
            "num_pes",
            "macs_per_pe",
            "freq_hz",
            "sram_per_pe_bytes",
            "local_mem_bandwidth",
            "local_mem_capacity_bytes",
            "link_count",
            "link_bandwidth",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"DeviceSpec.{name} must be positive")
        if self.local_mem_latency_cycles < 0:
            raise ValueError("DeviceSpec.local_mem_latency_cycles must be non-negative")
        if not 0 < self.mac_efficiency <= 1:
            raise ValueError("DeviceSpec.mac_efficiency must be in (0, 1]")

    @property
    def latency_seconds(self) -> float:
        return self.local_mem_latency_cycles / self.freq_hz


@dataclass(frozen=True)
class PhaseCost:
    seconds: float
    mac_bound_fraction: float
    bytes_touched: int


ZERO_COST = PhaseCost(0.0, 0.0, 0)


def peak_mac_throughput(spec: DeviceSpec) -> float:
    return spec.num_pes * spec.macs_per_pe * spec.freq_hz


def phase_bytes(fp: TensorFootprint, phase: Phase) -> int:
    """Local-memory bytes read and written by one phase of a layer."""
    if phase is Phase.FORWARD:
        # X, W in; Y out
        return fp.feature_in_bytes + fp.weight_bytes + fp.feature_out_bytes
    # X, W, dY in; dX, dW out
    return fp.feature_in_bytes + fp.weight_bytes + fp.grad_in_bytes + fp.grad_out_bytes + fp.weight_grad_bytes


def layer_compute_time(fp: TensorFootprint, spec: DeviceSpec, phase: Phase | str) -> PhaseCost:
    phase = Phase(phase)
    macs = fp.fwd_macs if phase is Phase.FORWARD else fp.bwd_macs
    nbytes = phase_bytes(fp, phase)
    if macs == 0 and nbytes == 0:
        return ZERO_COST
    mac_time = macs / (peak_mac_throughput(spec) * spec.mac_efficiency)
    mem_time = nbytes / spec.local_mem_bandwidth
    busy = max(mac_time, mem_time)
    return PhaseCost(
        seconds=busy + spec.latency_seconds,
        mac_bound_fraction=mac_time / busy,
        bytes_touched=nbytes,
    )
