"""DNN training workloads: layer graphs, tensor footprints and reuse distances.

A workload document is JSON::

    {
      "name": "vgg_e",
      "provenance": "...",
      "elementBytes": 4,
      "timesteps": 1,
      "layers": [
        {"id": 0, "name": "conv1_1", "kind": "conv",
         "C": 3, "K": 64, "R": 3, "S": 3, "P": 224, "Q": 224,
         "predecessors": []},
        ...
      ]
    }

Per-kind dimensions:

* ``conv``: C, K, R, S, P, Q and optional input size H, W (defaults P, Q)
* ``fc``: I, O
* ``recurrent-gemv``, ``lstm-cell``, ``gru-cell``: I, O and optional
  ``timesteps`` (defaults to the document value)
* ``activation``, ``normalization``: C, P, Q
* ``pooling``: C, P, Q and optional input size H, W (defaults 2P, 2Q)

Layers must be listed in forward-propagation order.
"""

from __future__ import annotations

import graphlib
import json
from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

COUNTER_LIMIT = 2**63 - 1


class WorkloadError(ValueError):
    """Malformed or invalid workload document."""

    def __init__(self, message: str, layer: int | None = None):
        self.layer = layer
        prefix = f"layer {layer}: " if layer is not None else ""
        super().__init__(prefix + message)


class FootprintOverflowError(OverflowError):
    pass


class LayerKind(str, Enum):
    CONV = "conv"
    FC = "fully-connected"
    RNN = "recurrent-gemv"
    LSTM = "lstm-cell"
    GRU = "gru-cell"
    ACTIVATION = "activation"
    POOLING = "pooling"
    NORMALIZATION = "normalization"

    @property
    def recurrent(self) -> bool:
        return self in (LayerKind.RNN, LayerKind.LSTM, LayerKind.GRU)

    @property
    def gemm(self) -> bool:
        return self in (LayerKind.CONV, LayerKind.FC) or self.recurrent

    @property
    def weighted(self) -> bool:
        return self.gemm


_KIND_ALIASES = {"fc": LayerKind.FC, "rnn": LayerKind.RNN, "lstm": LayerKind.LSTM, "gru": LayerKind.GRU}

GATES = {LayerKind.RNN: 1, LayerKind.LSTM: 4, LayerKind.GRU: 3}

_REQUIRED_DIMS = {
    LayerKind.CONV: ("C", "K", "R", "S", "P", "Q"),
    LayerKind.FC: ("I", "O"),
    LayerKind.RNN: ("I", "O"),
    LayerKind.LSTM: ("I", "O"),
    LayerKind.GRU: ("I", "O"),
    LayerKind.ACTIVATION: ("C", "P", "Q"),
    LayerKind.NORMALIZATION: ("C", "P", "Q"),
    LayerKind.POOLING: ("C", "P", "Q"),
}
_OPTIONAL_DIMS = {
    LayerKind.CONV: ("H", "W"),
    LayerKind.POOLING: ("H", "W"),
}


def parse_kind(value: str) -> LayerKind:
    if value in _KIND_ALIASES:
        return _KIND_ALIASES[value]
    return LayerKind(value)


@dataclass(frozen=True)
class LayerSpec:
    id: int
    kind: LayerKind
    dims: Mapping[str, int]
    predecessors: tuple[int, ...] = ()
    name: str = ""
    timesteps: int = 1
    element_bytes: int = 4

    def dim(self, key: str) -> int:
        if key in self.dims:
            return self.dims[key]
        # optional input spatial sizes
        if key == "H":
            return self.dims["P"] * (2 if self.kind is LayerKind.POOLING else 1)
        if key == "W":
            return self.dims["Q"] * (2 if self.kind is LayerKind.POOLING else 1)
        raise KeyError(key)

    @property
    def out_dim(self) -> str:
        """Dimension sharded under model parallelism."""
        return "K" if self.kind is LayerKind.CONV else "O"


@dataclass(frozen=True)
class TensorFootprint:
    feature_in_bytes: int
    feature_out_bytes: int
    weight_bytes: int
    fwd_macs: int
    bwd_macs: int

    @property
    def grad_in_bytes(self) -> int:
        return self.feature_out_bytes

    @property
    def grad_out_bytes(self) -> int:
        return self.feature_in_bytes

    @property
    def weight_grad_bytes(self) -> int:
        return self.weight_bytes

    def __add__(self, other: "TensorFootprint") -> "TensorFootprint":
        return TensorFootprint(
            self.feature_in_bytes + other.feature_in_bytes,
            self.feature_out_bytes + other.feature_out_bytes,
            self.weight_bytes + other.weight_bytes,
            self.fwd_macs + other.fwd_macs,
            self.bwd_macs + other.bwd_macs,
        )


ZERO_FOOTPRINT = TensorFootprint(0, 0, 0, 0, 0)


class Parallelism(str, Enum):
    DATA = "data"
    MODEL = "model"


@dataclass(frozen=True)
class TrainingConfig:
    batch_size: int = 512
    parallelism: Parallelism = Parallelism.DATA
    device_count: int = 8

    def __post_init__(self):
        object.__setattr__(self, "parallelism", Parallelism(self.parallelism))
        if self.batch_size < 1 or self.device_count < 1:
            raise ValueError("batch_size and device_count must be positive")
        if self.parallelism is Parallelism.DATA and self.batch_size % self.device_count:
            raise ValueError(f"batch size {self.batch_size} is not divisible by {self.device_count} devices")

    @property
    def per_device_batch(self) -> int:
        if self.parallelism is Parallelism.DATA:
            return self.batch_size // self.device_count
        return self.batch_size


@dataclass(frozen=True)
class NetworkDAG:
    name: str
    layers: tuple[LayerSpec, ...]
    element_bytes: int = 4
    timesteps: int = 1
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.layers)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(p, layer.id) for layer in self.layers for p in layer.predecessors]

    def successors(self) -> dict[int, list[int]]:
        succ: dict[int, list[int]] = {layer.id: [] for layer in self.layers}
        for a, b in self.edges:
            succ[a].append(b)
        return succ

    @property
    def weighted_layer_count(self) -> int:
        return sum(1 for layer in self.layers if layer.kind.weighted)

    @property
    def max_timesteps(self) -> int:
        return max(layer.timesteps for layer in self.layers)

    def to_document(self) -> dict:
        layers = []
        for layer in self.layers:
            entry = {"id": layer.id, "kind": layer.kind.value}
            if layer.name:
                entry["name"] = layer.name
            entry.update(dict(layer.dims))
            if layer.kind.recurrent and layer.timesteps != self.timesteps:
                entry["timesteps"] = layer.timesteps
            if layer.element_bytes != self.element_bytes:
                entry["elementBytes"] = layer.element_bytes
            entry["predecessors"] = list(layer.predecessors)
            layers.append(entry)
        doc = {"name": self.name}
        if self.provenance:
            doc["provenance"] = self.provenance
        doc.update(elementBytes=self.element_bytes, timesteps=self.timesteps, layers=layers)
        return doc


def _positive_int(value, what: str, layer: int | None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise WorkloadError(f"{what} must be an integer, got {value!r}", layer)
    if value <= 0:
        raise WorkloadError(f"{what} must be positive, got {value}", layer)
    return value


def parse_network(doc: Mapping) -> NetworkDAG:
    if not isinstance(doc, Mapping):
        raise WorkloadError("workload document must be a JSON object")
    for key in ("name", "layers"):
        if key not in doc:
            raise WorkloadError(f"missing field '{key}'")
    element_bytes = _positive_int(doc.get("elementBytes", 4), "elementBytes", None)
    timesteps = _positive_int(doc.get("timesteps", 1), "timesteps", None)
    raw_layers = doc["layers"]
    if not isinstance(raw_layers, list) or not raw_layers:
        raise WorkloadError("'layers' must be a non-empty list")

    layers: list[LayerSpec] = []
    seen: set[int] = set()
    for position, raw in enumerate(raw_layers):
        if not isinstance(raw, Mapping):
            raise WorkloadError(f"layer entry {position} is not an object")
        lid = raw.get("id", position)
        if isinstance(lid, bool) or not isinstance(lid, int) or lid < 0:
            raise WorkloadError(f"invalid layer id {lid!r}", position)
        if lid in seen:
            raise WorkloadError("duplicate layer id", lid)
        seen.add(lid)
        try:
            kind = parse_kind(raw.get("kind"))
        except ValueError:
            raise WorkloadError(f"unknown layer kind {raw.get('kind')!r}", lid) from None
        dims = {}
        for key in _REQUIRED_DIMS[kind]:
            if key not in raw:
                raise WorkloadError(f"missing dimension '{key}' for {kind.value}", lid)
            dims[key] = _positive_int(raw[key], f"dimension {key}", lid)
        for key in _OPTIONAL_DIMS.get(kind, ()):
            if key in raw:
                dims[key] = _positive_int(raw[key], f"dimension {key}", lid)
        if kind.recurrent:
            steps = _positive_int(raw.get("timesteps", timesteps), "timesteps", lid)
        else:
            steps = raw.get("timesteps", 1)
            if steps != 1:
                raise WorkloadError(f"timesteps must be 1 for {kind.value}", lid)
        preds = raw.get("predecessors", [])
        if not isinstance(preds, list) or any(isinstance(p, bool) or not isinstance(p, int) for p in preds):
            raise WorkloadError("predecessors must be a list of layer ids", lid)
        eb = _positive_int(raw.get("elementBytes", element_bytes), "elementBytes", lid)
        layers.append(
            LayerSpec(
                id=lid,
                kind=kind,
                dims=dims,
                predecessors=tuple(preds),
                name=str(raw.get("name", "")),
                timesteps=steps,
                element_bytes=eb,
            )
        )

    ids = {layer.id for layer in layers}
    for layer in layers:
        for p in layer.predecessors:
            if p not in ids:
                raise WorkloadError(f"unknown predecessor {p}", layer.id)

    sorter = graphlib.TopologicalSorter({layer.id: layer.predecessors for layer in layers})
    try:
        sorter.prepare()
    except graphlib.CycleError as exc:
        cycle = exc.args[1]
        raise WorkloadError(f"cycle detected: {' -> '.join(map(str, cycle))}", cycle[0]) from None

    # listed order must be the forward order
    position = {layer.id: i for i, layer in enumerate(layers)}
    for layer in layers:
        for p in layer.predecessors:
            if position[p] >= position[layer.id]:
                raise WorkloadError(f"predecessor {p} is listed after its consumer", layer.id)

    # renumber to ordinals so ids double as timeline positions
    if [layer.id for layer in layers] != list(range(len(layers))):
        remap = {layer.id: i for i, layer in enumerate(layers)}
        layers = [
            replace(layer, id=remap[layer.id], predecessors=tuple(remap[p] for p in layer.predecessors))
            for layer in layers
        ]

    return NetworkDAG(
        name=str(doc["name"]),
        layers=tuple(layers),
        element_bytes=element_bytes,
        timesteps=timesteps,
        provenance=str(doc.get("provenance", "")),
    )


def bundled_workloads() -> list[str]:
    root = resources.files("dlsim") / "workloads"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_network(source: str | Path | Mapping) -> NetworkDAG:
    """Load a workload from a mapping, a file path, or a bundled workload name."""
    if isinstance(source, Mapping):
        return parse_network(source)
    path = Path(source)
    if path.suffix == ".json" and path.exists():
        text = path.read_text()
    else:
        bundled = resources.files("dlsim") / "workloads" / f"{source}.json"
        if not bundled.is_file():
            raise WorkloadError(f"no such workload: {source}")
        text = bundled.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise WorkloadError(f"invalid JSON: {exc}") from None
    return parse_network(doc)


def dump_network(dag: NetworkDAG) -> str:
    return json.dumps(dag.to_document(), indent=1)


def _check(value: int, what: str, layer: LayerSpec) -> int:
    if value > COUNTER_LIMIT:
        raise FootprintOverflowError(f"layer {layer.id}: {what} exceeds 64-bit counter range")
    return value


def layer_footprint(layer: LayerSpec, batch: int) -> TensorFootprint:
    """Byte sizes and MAC counts of one layer for ``batch`` samples."""
    d = layer.dim
    eb = layer.element_bytes
    kind = layer.kind
    if kind is LayerKind.CONV:
        fin = batch * d("C") * d("H") * d("W")
        fout = batch * d("K") * d("P") * d("Q")
        weights = d("K") * d("C") * d("R") * d("S")
        macs = batch * d("K") * d("C") * d("R") * d("S") * d("P") * d("Q")
    elif kind is LayerKind.FC:
        fin = batch * d("I")
        fout = batch * d("O")
        weights = d("I") * d("O")
        macs = batch * d("I") * d("O")
    elif kind.recurrent:
        gates = GATES[kind]
        hidden = d("O")
        steps = layer.timesteps
        fin = steps * batch * d("I")
        fout = steps * batch * hidden
        weights = gates * (d("I") * hidden + hidden * hidden)
        macs = steps * gates * batch * (d("I") * hidden + hidden * hidden)
    elif kind is LayerKind.POOLING:
        fin = batch * d("C") * d("H") * d("W")
        fout = batch * d("C") * d("P") * d("Q")
        weights = 0
        macs = fout
    else:
        fin = fout = batch * d("C") * d("P") * d("Q")
        weights = 2 * d("C") if kind is LayerKind.NORMALIZATION else 0
        macs = fout
    bwd = 2 * macs if kind.gemm else macs
    return TensorFootprint(
        feature_in_bytes=_check(fin * eb, "featureIn bytes", layer),
        feature_out_bytes=_check(fout * eb, "featureOut bytes", layer),
        weight_bytes=_check(weights * eb, "weight bytes", layer),
        fwd_macs=_check(macs, "forward MACs", layer),
        bwd_macs=_check(bwd, "backward MACs", layer),
    )


def shard_footprint(layer: LayerSpec, cfg: TrainingConfig) -> TensorFootprint:
    """Per-device footprint after parallel partitioning.

    Data parallel splits the batch. Model parallel shards GEMM-backed layers
    along their output dimension and replicates weight-free layers.
    """
    fp = layer_footprint(layer, cfg.per_device_batch)
    if cfg.parallelism is Parallelism.DATA or not layer.kind.gemm or cfg.device_count == 1:
        return fp
    full = layer.dims[layer.out_dim]
    part = -(-full // cfg.device_count)
    return TensorFootprint(
        feature_in_bytes=fp.feature_in_bytes,
        feature_out_bytes=fp.feature_out_bytes * part // full,
        weight_bytes=fp.weight_bytes * part // full,
        fwd_macs=fp.fwd_macs * part // full,
        bwd_macs=fp.bwd_macs * part // full,
    )


@dataclass(frozen=True)
class FootprintReport:
    layers: tuple[TensorFootprint, ...]
    total: TensorFootprint

    @property
    def feature_bytes(self) -> int:
        return sum(fp.feature_in_bytes for fp in self.layers)

    @property
    def weight_bytes(self) -> int:
        return self.total.weight_bytes


def footprint(dag: NetworkDAG, cfg: TrainingConfig, *, sharded: bool = False) -> FootprintReport:
    """Per-layer footprints and totals.

    With ``sharded=False`` the whole mini-batch is accounted on one device;
    ``sharded=True`` gives per-device shards.
    """
    if sharded:
        per_layer = tuple(shard_footprint(layer, cfg) for layer in dag.layers)
    else:
        per_layer = tuple(layer_footprint(layer, cfg.batch_size) for layer in dag.layers)
    total = ZERO_FOOTPRINT
    for fp in per_layer:
        total = total + fp
    return FootprintReport(per_layer, total)


@dataclass(frozen=True)
class TensorReuse:
    """One feature-map tensor: the output of ``producer`` (None for network input)."""

    tensor: str
    producer: int | None
    consumers: tuple[int, ...]
    last_forward_use: int
    first_backward_use: int
    last_backward_use: int

    def forward_position(self, n: int) -> int:
        return self.last_forward_use

    def backward_position(self, n: int) -> int:
        return backward_position(self.first_backward_use, n)

    def reuse_distance(self, n: int) -> int:
        return self.backward_position(n) - self.last_forward_use


def backward_position(layer: int, n: int) -> int:
    """Position of a layer's backward step in the unified fwd+bwd timeline."""
    return 2 * n - 1 - layer


def reuse_schedule(dag: NetworkDAG) -> list[TensorReuse]:
    """Last forward use and first backward use of every feature-map tensor.

    Tensors are the network inputs (one per input layer, named ``X<id>``)
    and each layer's output (``Y<id>``). A layer output without consumers
    feeds the loss and is used at the boundary of the two passes.
    """
    succ = dag.successors()
    out: list[TensorReuse] = []
    for layer in dag.layers:
        if not layer.predecessors:
            out.append(TensorReuse(f"X{layer.id}", None, (layer.id,), layer.id, layer.id, layer.id))
    for layer in dag.layers:
        consumers = tuple(sorted(succ[layer.id]))
        if consumers:
            last_fwd = max(consumers)
            # backward visits layers in reverse order: highest ordinal first
            out.append(TensorReuse(f"Y{layer.id}", layer.id, consumers, last_fwd, max(consumers), min(consumers)))
        else:
            out.append(TensorReuse(f"Y{layer.id}", layer.id, (), layer.id, layer.id, layer.id))
    return out


def tensor_bytes(dag: NetworkDAG, cfg: TrainingConfig, reuse: TensorReuse) -> int:
    """Per-device bytes of a tensor.

    Under model parallelism consumers hold the gathered (full) tensor, so
    sizes are those of the unsharded producer output.
    """
    if reuse.producer is None:
        return shard_footprint(dag.layers[reuse.consumers[0]], cfg).feature_in_bytes
    producer = dag.layers[reuse.producer]
    return layer_footprint(producer, cfg.per_device_batch).feature_out_bytes


def chain(
    kinds: Iterable[str], *, width: int = 64, spatial: int = 8, element_bytes: int = 4, name: str = "chain"
) -> NetworkDAG:
    """Synthetic linear network, handy for tests and property checks."""
    layers = []
    for i, kind in enumerate(kinds):
        k = parse_kind(kind)
        if k is LayerKind.CONV:
            dims = dict(C=width, K=width, R=3, S=3, P=spatial, Q=spatial)
        elif k is LayerKind.FC or k.recurrent:
            dims = dict(I=width, O=width)
        elif k is LayerKind.POOLING:
            dims = dict(C=width, P=spatial, Q=spatial, H=spatial, W=spatial)
        else:
            dims = dict(C=width, P=spatial, Q=spatial)
        layers.append(
            LayerSpec(
                id=i,
                kind=k,
                dims=dims,
                predecessors=(i - 1,) if i else (),
                timesteps=1,
                element_bytes=element_bytes,
            )
        )
    return NetworkDAG(name=name, layers=tuple(layers), element_bytes=element_bytes)
