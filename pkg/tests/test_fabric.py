from collections import Counter
from pathlib import Path

import pytest

from dlsim.fabric import (
    D,
    Design,
    FabricError,
    FabricParams,
    LinkClass,
    MemoryNodeSpec,
    NodeKind,
    Policy,
    build_dc,
    build_design,
    build_hc,
    build_mc_ring,
    build_mc_star,
    build_oracle,
    dump_topology,
    parse_design,
    validate,
)

GOLDEN = Path(__file__).parent / "golden"


def hop_multiset(t):
    return sorted(r.hop_count for r in t.rings)


def independent_ring_check(t):
    """Re-derive ring soundness without using validate()."""
    used = Counter()
    for ring in t.rings:
        n = len(ring.nodes)
        assert n == len(ring.links) >= 2
        for k, lid in enumerate(ring.links):
            link = t.links[lid]
            assert {link.a, link.b} == {ring.nodes[k], ring.nodes[(k + 1) % n]}
            assert link.cls is LinkClass.HIGH_BANDWIDTH
            used[lid] += 1
    assert all(c == 1 for c in used.values()), "rings share a link"


def endpoint_budget(t):
    per = Counter()
    for link in t.links:
        if link.cls is LinkClass.HIGH_BANDWIDTH:
            per[link.a] += 1
            per[link.b] += 1
    return per


@pytest.mark.parametrize("design", list(Design))
def test_every_builder_validates(design):
    t = build_design(design)
    assert validate(t) == []
    independent_ring_check(t)
    budget = endpoint_budget(t)
    for node, used in budget.items():
        if node.kind is not NodeKind.HOST:
            assert used <= t.device_spec.link_count


@pytest.mark.parametrize("builder", [lambda: build_dc(4), lambda: build_mc_ring(4), lambda: build_mc_ring(2)])
def test_smaller_builds_validate(builder):
    t = builder()
    assert validate(t) == []
    independent_ring_check(t)


def test_dc_three_rings_of_eight():
    t = build_dc(8)
    assert hop_multiset(t) == [8, 8, 8]
    for ring in t.rings:
        assert sorted(ring.devices(), key=lambda n: n.index) == [D(i) for i in range(8)]


def test_dc_every_device_uses_six_endpoints():
    budget = endpoint_budget(build_dc(8))
    assert all(budget[D(i)] == 6 for i in range(8))


def test_dc_pcie_paths_and_sockets():
    t = build_dc(8)
    assert t.host.devices_per_socket == 4
    assert t.host.socket_mem_bandwidth == 80e9
    for i in range(8):
        path = t.migration_path(i)
        assert path.host_backed
        assert path.bandwidth() == 16e9
        assert t.links[path.segments[0].links[0]].cls is LinkClass.PCIE


def test_dc_rejects_unsupported_count():
    with pytest.raises(FabricError):
        build_dc(5)


def test_hc_paths_and_socket_cap():
    t = build_hc(8)
    assert t.host.socket_mem_bandwidth == 300e9
    for i in range(8):
        path = t.migration_path(i)
        assert path.bandwidth() == 75e9
        assert len(path.segments[0].links) == 3
    assert hop_multiset(t) == [8]


def test_hc_ring_bandwidth_is_third_of_dc():
    # 1 ring over 2 of the 3 remaining links per device, vs 3 rings in DC
    dc, hc = build_dc(8), build_hc(8)
    dc_bw = sum(dc.ring_bandwidth(r) for r in dc.rings)
    hc_bw = sum(hc.ring_bandwidth(r) for r in hc.rings)
    assert hc_bw / dc_bw == pytest.approx(1 / 3)


def test_hc_rejects_four_devices():
    with pytest.raises(FabricError):
        build_hc(4)


def test_mc_star_fig7a_hop_counts():
    assert hop_multiset(build_mc_star(variant="fig7a")) == [8, 8, 24]


def test_mc_star_fig7b_hop_counts():
    assert hop_multiset(build_mc_star(variant="fig7b")) == [8, 12, 20]


@pytest.mark.parametrize("variant", ["fig7a", "fig7b"])
def test_mc_star_migration_is_two_links(variant):
    t = build_mc_star(variant=variant)
    for i in range(8):
        path = t.migration_path(i)
        assert path.bandwidth() == 50e9
        assert path.segments[0].target.kind is NodeKind.MEMORY
        assert len(path.segments[0].links) == 2


def test_mc_ring_three_rings_of_sixteen():
    t = build_mc_ring(8)
    assert [len(r.nodes) for r in t.rings] == [16, 16, 16]
    for ring in t.rings:
        kinds = [n.kind for n in ring.nodes]
        assert all(kinds[k] != kinds[(k + 1) % 16] for k in range(16))


def test_mc_ring_bandwidths():
    bw = build_mc_ring(8, policy=Policy.BW_AWARE)
    local = build_mc_ring(8, policy=Policy.LOCAL)
    per_device = [bw.migration_path(i).bandwidth() for i in range(8)]
    assert per_device == [150e9] * 8
    assert sum(per_device) == 1200e9
    assert [local.migration_path(i).bandwidth() for i in range(8)] == [75e9] * 8
    assert local.migration_path(0).bandwidth() * 2 == bw.migration_path(0).bandwidth()


def test_mc_ring_left_and_right_regions():
    t = build_mc_ring(8)
    path = t.migration_path(0)
    assert [s.side for s in path.segments] == ["left", "right"]
    assert path.segments[0].target != path.segments[1].target
    assert all(len(s.links) == 3 for s in path.segments)


def test_mc_ring_odd_count_rejected():
    with pytest.raises(FabricError):
        build_mc_ring(7)


def test_link_side_binds_migration_bandwidth():
    for design in (Design.MC_FOLDED, Design.MC_RING_BW):
        t = build_design(design)
        for seg in t.migration_path(0).segments:
            assert seg.backing_bandwidth >= seg.link_bandwidth
            assert seg.bandwidth == seg.link_bandwidth


def test_memory_node_capacity_with_128gb_lrdimms():
    spec = MemoryNodeSpec()
    assert spec.capacity_bytes == pytest.approx(1.28e12)
    assert 8 * spec.capacity_bytes == pytest.approx(1.024e13)
    assert spec.group_bandwidth == 128e9


def test_oracle_shares_dc_rings_and_has_no_paths():
    dc, oracle = build_dc(8), build_oracle(8)
    assert oracle.rings == dc.rings
    assert oracle.migration_paths == {}
    assert oracle.unbounded_local_memory


def test_pcie_sharing_halves_per_device_bandwidth():
    shared = build_dc(8, params=FabricParams(pcie_shared=True))
    assert shared.migration_path(0).bandwidth() == 8e9


def test_design_aliases():
    assert parse_design("MC-B") is Design.MC_RING_BW
    assert parse_design("mc_s") is Design.MC_FOLDED
    assert parse_design("fig7a") is Design.MC_STAR
    with pytest.raises(FabricError):
        parse_design("torus")


def test_validate_reports_shared_ring_link():
    from dataclasses import replace

    t = build_dc(8)
    broken = replace(t, rings=(t.rings[0], t.rings[0]))
    assert any("used by ring" in p for p in validate(broken))


@pytest.mark.parametrize("design", list(Design))
def test_dump_matches_golden(design):
    text = dump_topology(build_design(design))
    assert text == dump_topology(build_design(design))
    assert text == (GOLDEN / f"topology_{design.value}.txt").read_text()
