"""Regenerate the shipped model and scenario documents under src/iegs/data.

Power sides reuse the standard 9-bus and 39-bus line and load data (100 MVA
base, line charging and shunts dropped).  Gas sides are synthetic networks
laid out to carry the features the test suite relies on: coupled gas-fired
units, parallel compressors between two nodes and a compressor joining two
loaded nodes.

    python3 scripts/build_fixtures.py
"""
import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "src" / "iegs" / "data"
BASE_MVA = 100.0

STD = {
    "p_inj": 0.01, "q_inj": 0.01, "p_flow_fwd": 0.01, "p_flow_rev": 0.01,
    "q_flow_fwd": 0.01, "q_flow_rev": 0.01, "v_mag": 0.005, "theta_pmu": 0.002,
    "g_inj": 0.02, "g_flow_pipe": 0.02, "g_flow_comp": 0.02, "pi": 0.02,
}

CASE9_LINES = [
    (1, 4, 0.0, 0.0576), (4, 5, 0.017, 0.092), (5, 6, 0.039, 0.17), (3, 6, 0.0, 0.0586),
    (6, 7, 0.0119, 0.1008), (7, 8, 0.0085, 0.072), (8, 2, 0.0, 0.0625), (8, 9, 0.032, 0.161),
    (9, 4, 0.01, 0.085),
]
CASE9_LOADS = [(5, 90.0, 30.0), (7, 100.0, 35.0), (9, 125.0, 50.0)]

CASE39_LINES = [
    (1, 2, 0.0035, 0.0411), (1, 39, 0.001, 0.025), (2, 3, 0.0013, 0.0151), (2, 25, 0.007, 0.0086),
    (2, 30, 0.0, 0.0181), (3, 4, 0.0013, 0.0213), (3, 18, 0.0011, 0.0133), (4, 5, 0.0008, 0.0128),
    (4, 14, 0.0008, 0.0129), (5, 6, 0.0002, 0.0026), (5, 8, 0.0008, 0.0112), (6, 7, 0.0006, 0.0092),
    (6, 11, 0.0007, 0.0082), (6, 31, 0.0, 0.025), (7, 8, 0.0004, 0.0046), (8, 9, 0.0023, 0.0363),
    (9, 39, 0.001, 0.025), (10, 11, 0.0004, 0.0043), (10, 13, 0.0004, 0.0043), (10, 32, 0.0, 0.02),
    (12, 11, 0.0016, 0.0435), (12, 13, 0.0016, 0.0435), (13, 14, 0.0009, 0.0101),
    (14, 15, 0.0018, 0.0217), (15, 16, 0.0009, 0.0094), (16, 17, 0.0007, 0.0089),
    (16, 19, 0.0016, 0.0195), (16, 21, 0.0008, 0.0135), (16, 24, 0.0003, 0.0059),
    (17, 18, 0.0007, 0.0082), (17, 27, 0.0013, 0.0173), (19, 20, 0.0007, 0.0138),
    (19, 33, 0.0007, 0.0142), (20, 34, 0.0009, 0.018), (21, 22, 0.0008, 0.014),
    (22, 23, 0.0006, 0.0096), (22, 35, 0.0, 0.0143), (23, 24, 0.0022, 0.035),
    (23, 36, 0.0005, 0.0272), (25, 26, 0.0032, 0.0323), (25, 37, 0.0006, 0.0232),
    (26, 27, 0.0014, 0.0147), (26, 28, 0.0043, 0.0474), (26, 29, 0.0057, 0.0625),
    (28, 29, 0.0014, 0.0151), (29, 38, 0.0008, 0.0156),
]
CASE39_LOADS = [
    (1, 97.6, 44.2), (3, 322.0, 2.4), (4, 500.0, 184.0), (7, 233.8, 84.0), (8, 522.0, 176.6),
    (9, 6.5, -66.6), (12, 8.53, 88.0), (15, 320.0, 153.0), (16, 329.0, 32.3), (18, 158.0, 30.0),
    (20, 680.0, 103.0), (21, 274.0, 115.0), (23, 247.5, 84.6), (24, 308.6, -92.2),
    (25, 224.0, 47.2), (26, 139.0, 17.0), (27, 281.0, 75.5), (28, 206.0, 27.6),
    (29, 283.5, 26.9), (31, 9.2, 4.6), (39, 1104.0, 250.0),
]
# bus, Pg (MW), Vset
CASE39_GENS = [
    (30, 250.0, 1.0499), (31, None, 0.982), (32, 650.0, 0.9841), (33, 632.0, 0.9972),
    (34, 508.0, 1.0123), (35, 650.0, 1.0494), (36, 560.0, 1.0636), (37, 540.0, 1.0275),
    (38, 830.0, 1.0265), (39, 1000.0, 1.03),
]


def admittance(r, x):
    z2 = r * r + x * x
    return r / z2, -x / z2


def power_side(n_bus, lines, loads, gens, pmu, reference):
    """Buses with injection bounds reflecting what is attached to them."""
    load_bus = {b for b, _, _ in loads}
    gen_bus = {int(g["bus"]): g for g in gens}
    buses = []
    for k in range(1, n_bus + 1):
        b = {"id": str(k), "v_min": 0.9, "v_max": 1.1, "theta_max": 1.0, "pmu": k in pmu}
        if k in gen_bus and k not in load_bus:
            b.update(p_min=0.0, p_max=gen_bus[k]["p_max"])
        elif k in load_bus and k not in gen_bus:
            b.update(p_max=0.0)
        elif k not in load_bus and k not in gen_bus:
            b.update(p_min=0.0, p_max=0.0, q_min=0.0, q_max=0.0)
        buses.append(b)
    doc_lines = []
    for f, t, r, x in lines:
        g, b = admittance(r, x)
        doc_lines.append({"id": f"L{f}-{t}", "from_bus": str(f), "to_bus": str(t),
                          "g": round(g, 10), "b": round(b, 10), "s_max": 20.0})
    doc_loads = [{"id": f"D{b}", "bus": str(b), "p": round(p / BASE_MVA, 6), "q": round(q / BASE_MVA, 6)}
                 for b, p, q in loads]
    return {"buses": buses, "lines": doc_lines, "generators": gens, "loads": doc_loads,
            "reference_bus": str(reference)}


def gas_side(n_nodes, pipes, comps, wells, loads, pi_range=(5.0, 30.0)):
    load_nodes = {n for n, _ in loads}
    well_nodes = {n for n, *_ in wells}
    nodes = []
    for k in range(1, n_nodes + 1):
        n = {"id": f"n{k}", "pi_min": pi_range[0], "pi_max": pi_range[1]}
        if k in well_nodes:
            n.update(g_min=0.0)
        else:
            n.update(g_max=0.0)
        nodes.append(n)
    return {
        "nodes": nodes,
        "pipelines": [{"id": f"P{f}-{t}", "from_node": f"n{f}", "to_node": f"n{t}", "weymouth": w,
                       "g_max": 40.0} for f, t, w in pipes],
        "compressors": comps,
        "wells": [{"id": wid, "node": f"n{n}", "g_max": gmax} for n, wid, gmax in wells],
        "loads": [{"id": f"GD{n}", "node": f"n{n}", "g": g} for n, g in loads],
    }


TURBO = {
    "kind": "turbo", "R_s": 0.5, "T": 2.8, "T_c": 1.9, "T_a": 2.9, "pi_c": 46.0, "kappa": 1.3,
    "n_min": 0.2, "n_max": 6.0,
    "a1": [0.001, 0.25, 0.02], "a2": [-1.0, 0.0, -1.0], "a3": [0.5, 0.5, 8.0],
    "A1": [[0.0, 0.0, 0.0], [0.0, 0.0, 0.5], [0.0, 0.0, 2.0]],
    "A2": [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
    "A3": [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [-0.02, 0.1, 0.7]],
}
PISTON = {
    "kind": "piston", "R_s": 0.5, "T": 2.8, "T_c": 1.9, "T_a": 2.9, "pi_c": 46.0, "kappa": 1.3,
    "V0": 0.4, "eta_bar": 0.82, "n_min": 0.0, "n_max": 10.0,
    "a1": [0.001, 0.25, 0.02], "a2": [-1.0, 0.0, -1.0], "a3": [0.5, 0.5, 8.0],
    "A1": [[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 2.0]],
}


def turbo_params():
    # speed-head curve h = 0.1 n^2 + 0.05 v n - 0.02 v^2, i.e. A2 rows over [v^2 v 1], cols [n^2 n 1]
    p = dict(TURBO)
    p["A2"] = [[0.0, 0.0, -0.02], [0.0, 0.05, 0.0], [0.1, 0.0, 0.0]]
    return p


def fixture_9_7():
    gens = [
        {"id": "G1", "bus": "1", "kind": "coal", "p_min": 0.0, "p_max": 3.0},
        {"id": "G2", "bus": "2", "kind": "gas", "p_min": 0.0, "p_max": 3.0, "gamma": 2.0, "gas_node": "n2"},
        {"id": "G3", "bus": "3", "kind": "gas", "p_min": 0.0, "p_max": 3.0, "gamma": 2.0, "gas_node": "n4"},
    ]
    power = power_side(9, CASE9_LINES, CASE9_LOADS, gens, pmu={1, 4}, reference=1)
    comps = [
        {"id": "C3-5", "from_node": "n3", "to_node": "n5", "ratio": 1.6, "c_max": 10.0,
         "detailed": PISTON},
        {"id": "C4-2a", "from_node": "n4", "to_node": "n2", "ratio": 1.6, "c_max": 10.0,
         "detailed": turbo_params()},
        {"id": "C4-2b", "from_node": "n4", "to_node": "n2", "ratio": 1.6, "c_max": 10.0},
    ]
    gas = gas_side(
        7,
        pipes=[(1, 3, 0.18), (1, 4, 1.5), (6, 7, 0.09), (6, 5, 0.04)],
        comps=comps,
        wells=[(1, "GW1", 20.0), (6, "GW2", 10.0)],
        loads=[(3, 1.0), (5, 1.5), (7, 1.2)],
    )
    model = {"schema": "iegs-model/1", "bases": {"power_mva": BASE_MVA, "gas": "normalized"},
             "power": power, "gas": gas, "coupling": {"p2g": []},
             "measurement_plan": {"preset": "full", "std": STD}}
    dispatch = {
        "slack_bus": "1", "slack_node": "n1", "slack_pi": 12.0, "slack_v": 1.04,
        "generators": {"G1": {"v": 1.04}, "G2": {"p": 1.63, "v": 1.025}, "G3": {"p": 0.85, "v": 1.025}},
        "wells": {"GW2": 2.0},
        "compressors": {"C3-5": {"ratio": 1.3}, "C4-2a": {"ratio": 1.2}, "C4-2b": {"flow": 1.5}},
    }
    return model, dispatch


def fixture_39_20():
    gas_fired = {30: "n8", 32: "n11", 37: "n19"}
    gens = []
    for bus, pg, _ in CASE39_GENS:
        g = {"id": f"G{bus}", "bus": str(bus), "p_min": 0.0, "p_max": 12.0}
        if bus in gas_fired:
            g.update(kind="gas", gamma=1.0, gas_node=gas_fired[bus])
        else:
            g.update(kind="coal")
        gens.append(g)
    power = power_side(39, CASE39_LINES, CASE39_LOADS, gens, pmu={16, 23}, reference=31)
    comps = [
        {"id": "C4-5", "from_node": "n4", "to_node": "n5", "ratio": 1.8, "c_max": 30.0},
        {"id": "C9-10a", "from_node": "n9", "to_node": "n10", "ratio": 1.8, "c_max": 30.0},
        {"id": "C9-10b", "from_node": "n9", "to_node": "n10", "ratio": 1.8, "c_max": 30.0},
        {"id": "C17-18", "from_node": "n17", "to_node": "n18", "ratio": 1.8, "c_max": 30.0},
    ]
    gas = gas_side(
        20,
        pipes=[(1, 2, 11.0), (2, 3, 9.6), (3, 4, 1.0), (5, 6, 0.5), (6, 7, 10.0), (7, 8, 9.0),
               (8, 9, 5.6), (10, 11, 5.6), (11, 12, 0.22), (12, 13, 0.05), (11, 14, 0.075),
               (3, 15, 4.4), (15, 16, 4.4), (16, 17, 4.4), (18, 19, 2.8), (19, 20, 0.1)],
        comps=comps,
        wells=[(1, "GW1", 40.0), (6, "GW6", 20.0)],
        loads=[(2, 1.0), (4, 1.2), (7, 0.8), (12, 1.0), (13, 0.9), (14, 1.1), (17, 1.0),
               (18, 0.7), (20, 1.3)],
        pi_range=(5.0, 50.0),
    )
    model = {"schema": "iegs-model/1", "bases": {"power_mva": BASE_MVA, "gas": "normalized"},
             "power": power, "gas": gas, "coupling": {"p2g": []},
             "measurement_plan": {"preset": "full", "std": STD}}
    gen_sp = {}
    for bus, pg, vset in CASE39_GENS:
        sp = {"v": vset}
        if pg is not None:
            sp["p"] = round(pg / BASE_MVA, 6)
        gen_sp[f"G{bus}"] = sp
    dispatch = {
        "slack_bus": "31", "slack_node": "n1", "slack_pi": 20.0, "slack_v": 0.982,
        "generators": gen_sp,
        "wells": {"GW6": 10.0},
        "compressors": {"C4-5": {"ratio": 1.5}, "C9-10a": {"ratio": 1.4}, "C9-10b": {"flow": 4.0},
                        "C17-18": {"ratio": 1.3}},
    }
    return model, dispatch


def write(name, doc):
    path = DATA / name
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    sys.path.insert(0, str(ROOT / "src"))
    from iegs.netmodel import load_model
    from iegs.scenario import DispatchSpec, solve_energy_flow

    for stem, build in (("iegs-9-7", fixture_9_7), ("iegs-39-20", fixture_39_20)):
        model_doc, dispatch = build()
        scen = {"schema": "iegs-scenario/1", "dispatch": dispatch, "noise": {"preset": "low", "seed": 20240}}
        write(f"{stem}.json", model_doc)
        write(f"{stem}.scenario.json", scen)
        model = load_model((DATA / f"{stem}.json").read_text())
        sol = solve_energy_flow(model, DispatchSpec.from_dict(dispatch))
        print(stem, "mismatch", sol.mismatch, "iters", sol.iterations)
        for v in sol.violations:
            print("  violation:", v)


if __name__ == "__main__":
    main()
