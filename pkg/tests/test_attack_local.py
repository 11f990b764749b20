import numpy as np
import pytest

from conftest import randomize_outside, rng
from iegs.attack_full import bias_analysis, verify_stealth
from iegs.attack_local import (LocalView, admissible_local_shift, forge_local, intruder_local_se,
                               partition_model, random_local_shift)
from iegs.estimator import estimate_iegs
from iegs.netmodel import model_from_dict
from test_meas import gas_path_model

REGIONS = {
    "iegs-9-7": [(["4", "5", "6"], ["n5", "n6", "n7"]), (["2", "7", "8", "9"], ["n1", "n2", "n4"])],
    "iegs-39-20": [([str(b) for b in range(1, 12)] + ["39"], ["n1", "n2", "n3", "n4"]),
                   ([str(b) for b in range(16, 25)] + ["33", "34", "35", "36"], [f"n{k}" for k in range(8, 13)])],
}


def regions(case):
    return REGIONS[case.stem]


def angle_free_diff(part, model, a, b):
    """Largest difference between region state vectors, ignoring a uniform angle offset."""
    labels = model.state_labels()
    idx = np.concatenate([part.x_A, part.x_B])
    d = np.zeros(model.n_state)
    d[part.x_A], d[part.x_B] = a[0] - b[0], a[1] - b[1]
    th = [i for i in idx if labels[i].startswith("theta:")]
    if th:
        d[th] -= np.mean(d[th])
    return np.max(np.abs(d[idx]))


# ---------------------------------------------------------------- partition


def test_two_region_boundary(two_region):
    p = partition_model(two_region, ["i", "a", "k"], ["m", "u", "o", "w"])
    assert p.boundary_buses == {"i": ("i",), "k": ("ii",)}
    assert p.boundary_nodes == {"m": ("i",), "o": ("iii",), "u": ("i",)}
    assert p.tie_lines == ("Lij",) and p.tie_pipelines == ("Pmn",) and p.tie_compressors == ("Cuv",)


def test_whole_system(case):
    m = case.model
    p = partition_model(m, [b.id for b in m.power.buses], [n.id for n in m.gas.nodes])
    assert p.z_N.size == 0 and p.x_N.size == 0
    kinds = set().union(*p.boundary_buses.values(), *p.boundary_nodes.values())
    assert kinds == {"ii", "iii"}
    pairs = m.equations.coupling.pairs
    assert set(p.boundary_buses) == {q.bus for q in pairs}
    assert set(p.boundary_nodes) == {q.node for q in pairs} | {g.gas_node for g in m.power.generators
                                                                  if g.kind == "gas"}


def test_no_units_no_ties_empty_boundary():
    m = gas_path_model()
    p = partition_model(m, nodes=["a", "b", "c"])
    assert p.boundary_buses == {} and p.boundary_nodes == {} and p.z_B.size == 0


def test_unknown_or_empty_region(case97):
    with pytest.raises(KeyError):
        partition_model(case97.model, ["99"])
    with pytest.raises(ValueError):
        partition_model(case97.model)


@pytest.mark.parametrize("k", [0, 1])
def test_index_sets_partition(case, k):
    m = case.model
    p = partition_model(m, *regions(case)[k])
    z = np.concatenate([p.z_A, p.z_B, p.z_N])
    x = np.concatenate([p.x_A, p.x_B, p.x_N])
    assert sorted(z.tolist()) == list(range(len(m.plan)))
    assert sorted(x.tolist()) == list(range(m.n_state))
    labels = m.meter_labels()
    zn = {labels[i] for i in p.z_N}
    for lid in p.tie_lines:
        assert {f"{q}_flow_{e}:{lid}" for q in "pq" for e in ("fwd", "rev")} <= zn
    for pid in p.tie_pipelines:
        assert f"g_flow_pipe:{pid}" in zn
    states = m.state_labels()
    for cid in p.tie_compressors:
        assert states.index(f"c:{cid}") in p.x_N
    # z_B holds injections only, at boundary points only
    for i in p.z_B:
        kind, el = labels[i].split(":")
        assert kind in ("p_inj", "q_inj", "g_inj")
        assert el in p.boundary_buses or el in p.boundary_nodes


def test_partition_document(case97):
    p = partition_model(case97.model, *REGIONS["iegs-9-7"][0])
    d = p.to_dict(case97.model)
    assert d["x_A"] == ["v:5", "theta:5", "pi:n6", "pi:n7"]
    assert d["assumptions"]


# ---------------------------------------------------------------- forging


def test_zero_shift(case97):
    m = case97.model
    p = partition_model(m, *REGIONS["iegs-9-7"][1])
    att = forge_local(case97.x[p.x_A], case97.x[p.x_B], np.zeros(p.x_A.size), p, m)
    assert not np.any(att.dz)


def test_shape_guard(case97):
    m = case97.model
    p = partition_model(m, *REGIONS["iegs-9-7"][0])
    with pytest.raises(ValueError):
        forge_local(case97.x[p.x_A], case97.x[p.x_B], np.zeros(m.n_state), p, m)


def test_gas_free_area_touches_power_only(case97):
    m = case97.model
    p = partition_model(m, ["4", "5", "6", "7", "8", "9"])
    dx_A = np.zeros(p.x_A.size)
    dx_A[list(p.x_A).index(m.state_index("v", "7"))] = 0.01
    att = forge_local(case97.x[p.x_A], case97.x[p.x_B], dx_A, p, m)
    touched = att.support()
    assert touched.size and m.equations.is_power_meter[touched].all()
    assert not np.any(att.dx[2 * m.n_buses:])


@pytest.mark.parametrize("k", [0, 1])
def test_zero_footprint_outside(case, k):
    m = case.model
    p = partition_model(m, *regions(case)[k])
    ms = case.measurements(preset="low", seed=5)
    xh = estimate_iegs(ms.z, m, ms.variances).x
    dx_A = random_local_shift(xh[p.x_A], xh[p.x_B], p, m, rng(k), 1e-3)
    att = forge_local(xh[p.x_A], xh[p.x_B], dx_A, p, m)
    assert np.all(att.dz[p.z_N] == 0.0)
    assert np.all(att.dx[p.x_B] == 0.0) and np.all(att.dx[p.x_N] == 0.0)


@pytest.mark.parametrize("k", [0, 1])
def test_residual_identity(case, k):
    m = case.model
    p = partition_model(m, *regions(case)[k])
    ms = case.measurements(preset="high", seed=2)
    xh = estimate_iegs(ms.z, m, ms.variances).x
    r0 = np.linalg.norm(ms.z - m.equations.h(xh))
    g = rng(10 + k)
    for _ in range(5):
        dx_A = random_local_shift(xh[p.x_A], xh[p.x_B], p, m, g, 1e-2)
        att = forge_local(xh[p.x_A], xh[p.x_B], dx_A, p, m)
        r1 = np.linalg.norm(ms.z + att.dz - m.equations.h(xh + att.dx))
        assert r1 == pytest.approx(r0, abs=1e-10)
        # coupled injections seen by the region keep their balance
        rc0 = m.equations.coupling_residual(xh)
        rc1 = m.equations.coupling_residual(xh + att.dx)
        np.testing.assert_allclose(rc1, rc0, atol=1e-10)


@pytest.mark.parametrize("k", [0, 1])
def test_stealthy_after_reestimation(case, k):
    m = case.model
    p = partition_model(m, *regions(case)[k])
    ms = case.measurements(preset="low", seed=5)
    xh = estimate_iegs(ms.z, m, ms.variances).x
    g = rng(20 + k)
    for _ in range(3):
        dx_A = random_local_shift(xh[p.x_A], xh[p.x_B], p, m, g, 5e-4)
        att = forge_local(xh[p.x_A], xh[p.x_B], dx_A, p, m)
        assert att.certificate["stealthy"]
        rep = verify_stealth(ms.z, att, m, variances=ms.variances)
        assert rep.after.clean and abs(rep.residual_change) <= 1e-6


def test_admissible_shift_is_projection(case97):
    m = case97.model
    p = partition_model(m, *REGIONS["iegs-9-7"][1])
    xa, xb = case97.x[p.x_A], case97.x[p.x_B]
    dx = admissible_local_shift(xa, xb, np.full(p.x_A.size, 1e-3), p, m)
    again = admissible_local_shift(xa, xb, dx, p, m)
    np.testing.assert_array_equal(dx, again)


@pytest.mark.parametrize("k", [0, 1])
def test_knowledge_firewall(case, k):
    m = case.model
    buses, nodes = regions(case)[k]
    p = partition_model(m, buses, nodes)
    xh = case.x
    dx_A = random_local_shift(xh[p.x_A], xh[p.x_B], p, m, rng(k), 1e-3)
    att = forge_local(xh[p.x_A], xh[p.x_B], dx_A, p, m)
    for seed in range(3):
        other = randomize_outside(m, buses, nodes, seed)
        assert other != m
        q = partition_model(other, buses, nodes)
        dx2 = random_local_shift(xh[q.x_A], xh[q.x_B], q, other, rng(k), 1e-3)
        att2 = forge_local(xh[q.x_A], xh[q.x_B], dx2, q, other)
        assert np.array_equal(att.dz, att2.dz)


def test_view_reads_region_only(two_region):
    p = partition_model(two_region, ["i", "a", "k"], ["m", "u", "o", "w"])
    v = LocalView(two_region, p)
    assert [l.id for l in v.model.power.lines] == ["Lia", "Lak"]
    assert [x.id for x in v.model.gas.pipelines] == ["Pwm", "Pwo", "Pwu"]
    assert v.model.gas.compressors == ()
    gk = [g for g in v.model.power.generators if g.id == "Gk"][0]
    assert gk.gas_node is None
    assert v.external_feeds == ("o",) and v.external_sites == ("k",)


# ---------------------------------------------------------------- intruder SE


def _local_inputs(case, p, ms):
    tie = np.array([ms.z[t[0]] for t in p.tie_meters])
    return ms.z[p.z_A], ms.z[p.z_B], tie


def test_intruder_whole_system_equals_operator(case):
    # no tie lines at all: the intruder sees the operator's problem minus coupling
    m = case.model
    p = partition_model(m, [b.id for b in m.power.buses], [n.id for n in m.gas.nodes])
    ms = case.measurements(preset="none")
    za, zb, tie = _local_inputs(case, p, ms)
    assert tie.size == 0
    est = intruder_local_se(za, zb, tie, p, m)
    assert angle_free_diff(p, m, (est.x_A, est.x_B), (case.x[p.x_A], case.x[p.x_B])) < 1e-6


@pytest.mark.parametrize("k", [0, 1])
def test_intruder_exact_with_tie_flows(case, k):
    m = case.model
    p = partition_model(m, *regions(case)[k])
    ms = case.measurements(preset="none")
    za, zb, tie = _local_inputs(case, p, ms)
    assert np.any(np.abs(tie) > 1e-3)
    est = intruder_local_se(za, zb, tie, p, m)
    assert angle_free_diff(p, m, (est.x_A, est.x_B), (case.x[p.x_A], case.x[p.x_B])) < 1e-6


def test_intruder_bias_pipeline(case97):
    m = case97.model
    p = partition_model(m, *REGIONS["iegs-9-7"][1])
    ms = case97.measurements(preset="low", seed=5)
    op = estimate_iegs(ms.z, m, ms.variances)
    za, zb, tie = _local_inputs(case97, p, ms)
    var = np.concatenate([ms.variances[p.z_A], ms.variances[p.z_B]])
    est = intruder_local_se(za, zb, tie, p, m, var)
    xi = np.zeros(m.n_state)
    xi[p.x_A], xi[p.x_B] = est.x_A - op.x[p.x_A], est.x_B - op.x[p.x_B]
    assert np.linalg.norm(xi) > 0
    dx_A = random_local_shift(est.x_A, est.x_B, p, m, rng(1), 1e-3)
    att = forge_local(est.x_A, est.x_B, dx_A, p, m)
    rep = bias_analysis(op.x, xi, att.dx, m, ms.z - m.equations.h(op.x))
    assert rep.exact <= rep.bound + 1e-6


def test_tie_reading_shape(case97):
    m = case97.model
    p = partition_model(m, *REGIONS["iegs-9-7"][0])
    ms = case97.measurements(preset="none")
    with pytest.raises(ValueError):
        intruder_local_se(ms.z[p.z_A], ms.z[p.z_B], np.zeros(1 + len(p.tie_meters)), p, m)


def test_sign_of_tie_subtraction():
    # a two-node region fed through a tie pipe: the revised injection at b drops the inflow
    m = model_from_dict({
        "schema": "iegs-model/1",
        "power": {"buses": [], "lines": [], "generators": [], "loads": []},
        "gas": {"nodes": [{"id": "a"}, {"id": "b"}, {"id": "c"}],
                "pipelines": [{"id": "ab", "from_node": "a", "to_node": "b", "weymouth": 1.0},
                              {"id": "bc", "from_node": "b", "to_node": "c", "weymouth": 1.0}],
                "compressors": [], "wells": [], "loads": []},
        "coupling": {"p2g": []},
        "measurement_plan": {"preset": "full", "std": 0.01},
    })
    p = partition_model(m, nodes=["b", "c"])
    x = np.array([5.0, 4.0, 3.0])
    z = m.equations.h(x)
    tie = np.array([z[t[0]] for t in p.tie_meters])
    est = intruder_local_se(z[p.z_A], z[p.z_B], tie, p, m)
    assert est.result.r_norm < 1e-10
    np.testing.assert_allclose(est.x_B, [4.0], atol=1e-9)
    np.testing.assert_allclose(est.x_A, [3.0], atol=1e-9)
