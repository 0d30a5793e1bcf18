import json

import pytest

from dlsim.workload import (
    GATES,
    LayerKind,
    Parallelism,
    TrainingConfig,
    WorkloadError,
    backward_position,
    bundled_workloads,
    chain,
    dump_network,
    footprint,
    layer_footprint,
    load_network,
    parse_network,
    reuse_schedule,
    shard_footprint,
)


def doc(layers, **extra):
    return {"name": "t", "elementBytes": 4, "layers": layers, **extra}


def fc(lid, i, o, preds=()):
    return {"id": lid, "kind": "fc", "I": i, "O": o, "predecessors": list(preds)}


# Table II layer counts (weighted layers) and timesteps
TABLE2 = {
    "alexnet": (8, 1),
    "googlenet": (58, 1),
    "vgg_e": (19, 1),
    "resnet": (34, 1),
    "rnn_gemv": (3, 50),
    "rnn_lstm_1": (3, 25),
    "rnn_lstm_2": (3, 25),
    "rnn_gru": (3, 187),
}


def test_eight_bundled_workloads():
    assert sorted(bundled_workloads()) == sorted(TABLE2)


@pytest.mark.parametrize("name", sorted(TABLE2))
def test_bundled_layer_counts_and_timesteps(name):
    dag = load_network(name)
    weighted, steps = TABLE2[name]
    if steps == 1:
        assert dag.weighted_layer_count == weighted
    assert dag.max_timesteps == steps
    assert dag.provenance


def test_rnn_gru_has_187_timesteps():
    dag = load_network("rnn_gru")
    assert any(layer.kind is LayerKind.GRU and layer.timesteps == 187 for layer in dag.layers)


def test_self_cycle_rejected():
    with pytest.raises(WorkloadError, match="cycle"):
        parse_network(doc([fc(0, 4, 4, preds=[0])]))


def test_two_layer_cycle_names_a_layer():
    with pytest.raises(WorkloadError) as err:
        parse_network(doc([fc(0, 4, 4, preds=[1]), fc(1, 4, 4, preds=[0])]))
    assert err.value.layer in (0, 1)


def test_unknown_kind_names_layer():
    with pytest.raises(WorkloadError) as err:
        parse_network(doc([fc(0, 4, 4), {"id": 1, "kind": "softmax", "predecessors": [0]}]))
    assert err.value.layer == 1
    assert "softmax" in str(err.value)


@pytest.mark.parametrize("bad", [0, -3, 2.5, "7", True])
def test_non_positive_or_non_integer_dim_rejected(bad):
    with pytest.raises(WorkloadError, match="dimension O"):
        parse_network(doc([fc(0, 4, bad)]))


def test_timesteps_only_for_recurrent_layers():
    layer = fc(0, 4, 4)
    layer["timesteps"] = 3
    with pytest.raises(WorkloadError, match="timesteps"):
        parse_network(doc([layer]))


def test_unknown_predecessor_rejected():
    with pytest.raises(WorkloadError, match="unknown predecessor"):
        parse_network(doc([fc(0, 4, 4, preds=[9])]))


def test_fc_footprint_hand_arithmetic():
    layer = parse_network(doc([fc(0, 4096, 4096)])).layers[0]
    fp = layer_footprint(layer, 512)
    assert fp.weight_bytes == 67_108_864
    assert fp.fwd_macs == 8_589_934_592
    assert fp.feature_out_bytes == 512 * 4096 * 4
    assert fp.bwd_macs == 2 * fp.fwd_macs


def test_conv_footprint_formula():
    d = dict(C=3, K=96, R=11, S=11, P=55, Q=55, H=227, W=227)
    layer = parse_network(doc([{"id": 0, "kind": "conv", **d, "predecessors": []}])).layers[0]
    fp = layer_footprint(layer, 2)
    assert fp.feature_out_bytes == 2 * 96 * 55 * 55 * 4
    assert fp.feature_in_bytes == 2 * 3 * 227 * 227 * 4
    assert fp.fwd_macs == 2 * 96 * 3 * 11 * 11 * 55 * 55
    assert fp.weight_bytes == 96 * 3 * 11 * 11 * 4


def test_activation_is_weight_free_and_shape_preserving():
    c = 256 * 1024 // 16  # 1 MiB of fp32 at P=Q=4
    layer = parse_network(doc([{"id": 0, "kind": "activation", "C": c, "P": 4, "Q": 4, "predecessors": []}])).layers[0]
    fp = layer_footprint(layer, 1)
    assert fp.feature_in_bytes == 1 << 20
    assert fp.weight_bytes == 0
    assert fp.feature_out_bytes == fp.feature_in_bytes
    assert fp.fwd_macs == c * 16


def test_lstm_macs_match_per_gate_enumeration():
    hidden, steps, batch = 64, 25, 8
    layer = parse_network(
        doc([{"id": 0, "kind": "lstm-cell", "I": hidden, "O": hidden, "timesteps": steps, "predecessors": []}])
    ).layers[0]
    per_gate = []
    for _gate in ("input", "forget", "cell", "output"):
        per_gate.append(batch * hidden * hidden + batch * hidden * hidden)  # W x and U h
    assert layer_footprint(layer, batch).fwd_macs == steps * sum(per_gate)
    assert GATES[LayerKind.LSTM] == 4 and GATES[LayerKind.GRU] == 3 and GATES[LayerKind.RNN] == 1


def test_gradients_mirror_primal_tensors():
    fp = layer_footprint(load_network("alexnet").layers[0], 4)
    assert fp.grad_in_bytes == fp.feature_out_bytes
    assert fp.grad_out_bytes == fp.feature_in_bytes
    assert fp.weight_grad_bytes == fp.weight_bytes


def test_batch_must_divide_devices_for_data_parallel():
    with pytest.raises(ValueError):
        TrainingConfig(batch_size=100, device_count=8)
    TrainingConfig(batch_size=100, device_count=8, parallelism="model")


def test_model_parallel_shards_output_dimension():
    layer = parse_network(doc([fc(0, 4096, 4096)])).layers[0]
    cfg = TrainingConfig(512, Parallelism.MODEL, 8)
    fp = shard_footprint(layer, cfg)
    assert fp.weight_bytes == 4096 * 512 * 4
    assert fp.feature_in_bytes == 512 * 4096 * 4  # input replicated
    data = shard_footprint(layer, TrainingConfig(512, Parallelism.DATA, 8))
    assert data.feature_in_bytes == 64 * 4096 * 4


def test_footprint_additivity():
    for name in bundled_workloads():
        dag = load_network(name)
        rep = footprint(dag, TrainingConfig())
        assert rep.total.weight_bytes == sum(fp.weight_bytes for fp in rep.layers)
        assert rep.total.feature_in_bytes == sum(fp.feature_in_bytes for fp in rep.layers)


def test_reuse_chain_case():
    reuse = {r.tensor: r for r in reuse_schedule(chain(["conv", "conv", "conv"]))}
    y0 = reuse["Y0"]  # featureIn of L1
    assert y0.last_forward_use == 1 and y0.first_backward_use == 1
    assert backward_position(1, 3) == 4


def test_reuse_fan_out_takes_max():
    dag = parse_network(doc([fc(0, 4, 4), fc(1, 4, 4, [0]), fc(2, 4, 4, [0]), fc(3, 4, 4, [1, 2])]))
    y0 = {r.tensor: r for r in reuse_schedule(dag)}["Y0"]
    assert y0.last_forward_use == 2
    assert y0.consumers == (1, 2)


def _walk_reuse(dag):
    """Brute force: scan the fwd+bwd timeline and record each tensor's uses."""
    n = len(dag.layers)
    fwd_uses, bwd_uses = {}, {}
    for pos in range(2 * n):
        layer = dag.layers[pos] if pos < n else dag.layers[2 * n - 1 - pos]
        inputs = [f"Y{p}" for p in layer.predecessors] or [f"X{layer.id}"]
        target = fwd_uses if pos < n else bwd_uses
        for name in inputs:
            target.setdefault(name, []).append(pos)
    return fwd_uses, bwd_uses


def test_reuse_matches_brute_force_walk_on_vgg():
    dag = load_network("vgg_e")
    n = len(dag.layers)
    fwd, bwd = _walk_reuse(dag)
    reuse = {r.tensor: r for r in reuse_schedule(dag)}
    for name, uses in fwd.items():
        assert reuse[name].last_forward_use == max(uses)
        assert reuse[name].backward_position(n) == min(bwd[name])
    distance = {name: r.reuse_distance(n) for name, r in reuse.items() if r.consumers}
    assert max(distance, key=distance.get) == "X0"
    assert distance["X0"] == 2 * n - 1


def test_round_trip_all_bundled():
    for name in bundled_workloads():
        dag = load_network(name)
        again = parse_network(json.loads(dump_network(dag)))
        assert again == dag


def test_load_from_path(tmp_path):
    p = tmp_path / "net.json"
    p.write_text(json.dumps(doc([fc(0, 8, 8), fc(1, 8, 2, [0])])))
    dag = load_network(str(p))
    assert len(dag.layers) == 2


def test_unknown_bundled_name():
    with pytest.raises(WorkloadError, match="no such workload"):
        load_network("lenet")
