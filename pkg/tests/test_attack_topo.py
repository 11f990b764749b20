import numpy as np
import pytest

from conftest import _doc, randomize_outside
from iegs.attack_full import verify_stealth
from iegs.attack_topo import FLOW, LOAD, CompressorGraph, demonstrate_lemma1, enumerate_candidates, forge_topo
from iegs.errors import InfeasibleAttackError
from iegs.estimator import detect_bad_data, estimate_iegs
from iegs.meas import h_full
from iegs.netmodel import model_from_dict

# expected catalog per fixture: (kind, compressors with signs)
CATALOG = {
    "iegs-9-7": {(LOAD, (("C3-5", 1),)), (FLOW, (("C4-2a", 1), ("C4-2b", -1)))},
    "iegs-39-20": {(LOAD, (("C17-18", 1),)), (FLOW, (("C9-10a", 1), ("C9-10b", -1)))},
}


def gas_doc(nodes, pipes, comps, wells, loads):
    gas = {"nodes": [{"id": n} for n in nodes],
           "pipelines": [{"id": f"P{a}{b}", "from_node": a, "to_node": b, "weymouth": 1.0} for a, b in pipes],
           "compressors": [{"id": f"C{a}{b}", "from_node": a, "to_node": b, "ratio": 1.3} for a, b in comps],
           "wells": [{"id": f"W{n}", "node": n} for n in wells],
           "loads": [{"id": f"D{n}", "node": n, "g": 1.0} for n in loads]}
    power = {"buses": [], "lines": [], "generators": [], "loads": []}
    return model_from_dict(_doc(power, gas, plan={"preset": "full", "std": 0.01}))


def pipe_and_compressor():
    """Compressor i->j beside a pipeline i->j, loads at both ends, well behind i."""
    return gas_doc(["w", "i", "j"], [("w", "i"), ("i", "j")], [("i", "j")], ["w"], ["i", "j"])


def triangle():
    return gas_doc(["5", "6", "7", "8"], [("5", "6")], [("6", "7"), ("7", "8"), ("6", "8")], ["5"], [])


def test_pipe_and_compressor_load_candidate():
    (c,) = enumerate_candidates(pipe_and_compressor())
    assert c.kind == LOAD
    assert c.meters == (("g_inj", "i"), ("g_inj", "j"), ("g_flow_comp", "Cij"))
    assert c.pattern == (1, -1, 1)


def test_triangle_cycle_candidate():
    (c,) = enumerate_candidates(triangle())
    assert c.kind == FLOW
    assert c.compressors == (("C67", 1), ("C78", 1), ("C68", -1))
    assert c.pattern == (1, 1, -1)


def test_compressor_graph_drops_pipes():
    g = CompressorGraph(pipe_and_compressor())
    assert g.edges == (("Cij", "i", "j"),) and g.cycles == ()
    assert len(set(g.component.values())) == 2


@pytest.mark.parametrize("stem,nodes", [("iegs-39-20", ["n4", "n5"]), ("iegs-9-7", ["n6", "n7"])])
def test_no_candidates(stem, nodes):
    from conftest import get_case
    assert enumerate_candidates(get_case(stem).model, nodes) == []


def test_fixture_catalog(case):
    got = {(c.kind, c.compressors) for c in enumerate_candidates(case.model)}
    assert got == CATALOG[case.stem]


def test_admissible_ranges(case97):
    m = case97.model
    z = case97.measurements(preset="none").z
    idx = m.meter_index
    for c in enumerate_candidates(m, z=z):
        lo, hi = c.admissible
        if c.kind == LOAD:
            gi, gj = (abs(z[idx[k]]) for k in c.meters[:2])
            cflow = z[idx[("g_flow_comp", "C3-5")]]
            assert (lo, hi) == (max(-min(gi, gj), -cflow), min(gi, gj))
        else:
            assert (lo, hi) == (-z[idx[("g_flow_comp", "C4-2a")]], z[idx[("g_flow_comp", "C4-2b")]])
        assert c.max_magnitude == min(-lo, hi) > 0


def test_zero_and_out_of_range(case97):
    m = case97.model
    z = case97.measurements(preset="none").z
    for c in enumerate_candidates(m, z=z):
        att = forge_topo(c, 0.0, z, m)
        assert not np.any(att.dz) and not np.any(att.dx)
        with pytest.raises(InfeasibleAttackError):
            forge_topo(c, c.admissible[1] * 1.01 + 1e-6, z, m)


def test_null_space_certificate(case):
    m = case.model
    z = case.measurements(preset="none").z
    B = m.equations.B_comp.astype(int)
    for c in enumerate_candidates(m, z=z):
        if c.kind != FLOW:
            continue
        att = forge_topo(c, 0.5 * c.max_magnitude, z, m)
        assert att.certificate["null_space"]
        pattern = np.zeros(B.shape[1], dtype=int)
        for cid, s in c.compressors:
            pattern[m.gas.compressor_index[cid]] = s
        assert not np.any(B @ pattern)


def test_balance_certificate(case):
    m = case.model
    ms = case.measurements(preset="low", seed=3)
    x = estimate_iegs(ms.z, m, ms.variances).x
    eq = m.equations
    nodes = [n.id for n in m.gas.nodes]
    for c in enumerate_candidates(m, z=ms.z):
        att = forge_topo(c, 0.5 * c.max_magnitude, ms.z, m)
        moved = eq.node_injections(x + att.dx) - eq.node_injections(x)
        for k, n in enumerate(nodes):
            want = att.dz[m.meter_index[("g_inj", n)]] if ("g_inj", n) in m.meter_index else 0.0
            assert moved[k] == pytest.approx(want, abs=1e-12)
        np.testing.assert_allclose(h_full(x + att.dx, m) - h_full(x, m), att.dz, atol=1e-12)


def test_topology_only_dependence(case):
    m = case.model
    z = case.measurements(preset="low", seed=1).z
    ref = enumerate_candidates(m, z=z)
    for seed in range(3):
        other = randomize_outside(m, seed=seed)
        got = enumerate_candidates(other, z=z)
        assert got == ref
        for a, b in zip(ref, got):
            d = 0.3 * a.max_magnitude
            np.testing.assert_array_equal(forge_topo(a, d, z, m).dz, forge_topo(b, d, z, other).dz)


@pytest.mark.parametrize("frac", [-0.6, 0.4, 0.9])
def test_end_to_end_same_verdict(case, frac):
    m = case.model
    ms = case.measurements(preset="low", seed=4)
    before = estimate_iegs(ms.z, m, ms.variances)
    v0 = detect_bad_data(ms.z, before)
    for c in enumerate_candidates(m, z=ms.z):
        lo, hi = c.admissible
        d = frac * (hi if frac > 0 else -lo)
        att = forge_topo(c, d, ms.z, m)
        rep = verify_stealth(ms.z, att, m, variances=ms.variances)
        v1 = rep.after
        assert (v1.global_bad_data, v1.coupling_inconsistency) == (v0.global_bad_data, v0.coupling_inconsistency)
        assert abs(rep.r_after - rep.r_before) <= 1e-8
        np.testing.assert_allclose(rep.x_after, rep.x_before + att.dx, atol=1e-6)


def test_catalog_document(case97):
    z = case97.measurements(preset="none").z
    doc = [c.to_dict() for c in enumerate_candidates(case97.model, z=z)]
    load = next(d for d in doc if d["kind"] == LOAD)
    assert load["meters"] == ["g_inj:n3", "g_inj:n5", "g_flow_comp:C3-5"]
    assert load["pattern"] == [1, -1, 1] and len(load["admissible"]) == 2


# ---------------------------------------------------------------- power side


OUTSIDE_PMU = {"iegs-9-7": "4", "iegs-39-20": "23"}


def test_power_side_demonstrator(case):
    m = case.model
    ms = case.measurements(preset="none")
    rep = demonstrate_lemma1(m, ms.z, ms.variances, outside_bus=OUTSIDE_PMU[case.stem])
    inside = rep.all_pmus_inside
    assert abs(inside.r_after - inside.r_before) <= 1e-10
    assert rep.pmu_outside.r_after > rep.pmu_outside.r_before
    assert len(rep.trials) == 100 and rep.all_increase
    assert rep.to_dict()["all_increase"]


def test_power_side_rejects_bus_without_pmu(case97):
    ms = case97.measurements(preset="none")
    with pytest.raises(ValueError):
        demonstrate_lemma1(case97.model, ms.z, ms.variances, outside_bus="5", n_trials=0)
