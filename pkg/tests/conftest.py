import json

import numpy as np
import pytest

from iegs import fixture_path
from iegs.netmodel import load_model, model_from_dict, read_model
from iegs.scenario import DispatchSpec, NoiseModel, sample_measurements, solve_energy_flow

STEMS = ("iegs-9-7", "iegs-39-20")

PLAN_STD = {"p_inj": 0.01, "q_inj": 0.01, "p_flow_fwd": 0.01, "p_flow_rev": 0.01,
            "q_flow_fwd": 0.01, "q_flow_rev": 0.01, "v_mag": 0.005, "theta_pmu": 0.002,
            "g_inj": 0.02, "g_flow_pipe": 0.02, "g_flow_comp": 0.02, "pi": 0.02}


class Case:
    """A fixture model with its dispatch, true state and handy measurement sets."""

    def __init__(self, stem):
        self.stem = stem
        self.model = read_model(fixture_path(stem))
        doc = json.loads(fixture_path(stem, scenario=True).read_text())
        self.dispatch = DispatchSpec.from_dict(doc["dispatch"])
        self.solution = solve_energy_flow(self.model, self.dispatch)
        self.x = self.solution.x
        self._ms = {}

    def measurements(self, preset=None, seed=0):
        key = (preset, seed)
        if key not in self._ms:
            self._ms[key] = sample_measurements(self.x, self.model, NoiseModel(preset=preset, seed=seed))
        return self._ms[key]


_CASES = {}


def get_case(stem) -> Case:
    if stem not in _CASES:
        _CASES[stem] = Case(stem)
    return _CASES[stem]


@pytest.fixture(params=STEMS, scope="session")
def case(request):
    return get_case(request.param)


@pytest.fixture(scope="session")
def case97():
    return get_case("iegs-9-7")


@pytest.fixture(scope="session")
def case3920():
    return get_case("iegs-39-20")


def _doc(power, gas, p2g=(), plan=None):
    return {"schema": "iegs-model/1", "power": power, "gas": gas,
            "coupling": {"p2g": list(p2g)},
            "measurement_plan": plan or {"preset": "full", "std": PLAN_STD}}


def toy2_doc():
    """Two buses, two nodes, one compressor; bus 2 hosts the only gas-fired unit."""
    power = {
        "buses": [{"id": "1", "v_min": 0.9, "v_max": 1.1}, {"id": "2", "v_min": 0.9, "v_max": 1.1}],
        "lines": [{"id": "L12", "from_bus": "1", "to_bus": "2", "g": 0.99, "b": -9.9}],
        "generators": [{"id": "G1", "bus": "1", "kind": "coal", "p_max": 5.0},
                       {"id": "G2", "bus": "2", "kind": "gas", "gamma": 1.5, "gas_node": "n2",
                        "p_max": 2.0}],
        "loads": [{"id": "D1", "bus": "1", "p": 0.8, "q": 0.2}],
        "reference_bus": "1",
    }
    gas = {
        "nodes": [{"id": "n1", "pi_min": 5.0, "pi_max": 30.0}, {"id": "n2", "pi_min": 5.0, "pi_max": 30.0}],
        "pipelines": [],
        "compressors": [{"id": "C12", "from_node": "n1", "to_node": "n2", "ratio": 1.5, "c_max": 10.0}],
        "wells": [{"id": "GW1", "node": "n1", "g_max": 10.0}],
        "loads": [],
    }
    return _doc(power, gas)


TOY2_DISPATCH = DispatchSpec(slack_bus="1", slack_node="n1", slack_pi=10.0,
                             generators={"G1": {"v": 1.0}, "G2": {"p": 0.5, "v": 1.02}},
                             compressors={"C12": {"ratio": 1.2}})


def toy_p2g_doc():
    """Bus 2 carries only a P2G unit that feeds node n2; gas flows n2 -> n1."""
    power = {
        "buses": [{"id": "1", "pmu": True}, {"id": "2"}],
        "lines": [{"id": "L12", "from_bus": "1", "to_bus": "2", "g": 0.99, "b": -9.9}],
        "generators": [{"id": "G1", "bus": "1", "kind": "coal", "p_max": 5.0}],
        "loads": [{"id": "D1", "bus": "1", "p": 0.4, "q": 0.1}],
        "reference_bus": "1",
    }
    gas = {
        "nodes": [{"id": "n1", "pi_min": 1.0, "pi_max": 40.0}, {"id": "n2", "pi_min": 1.0, "pi_max": 40.0}],
        "pipelines": [{"id": "P21", "from_node": "n2", "to_node": "n1", "weymouth": 0.05}],
        "compressors": [],
        "wells": [{"id": "GW1", "node": "n1", "g_max": 10.0}],
        "loads": [{"id": "GD1", "node": "n1", "g": 2.0}],
    }
    p2g = [{"id": "F2", "bus": "2", "node": "n2", "chi": 0.8, "p_max": 2.0}]
    return _doc(power, gas, p2g)


P2G_DISPATCH = DispatchSpec(slack_bus="1", slack_node="n1", slack_pi=10.0,
                            generators={"G1": {"v": 1.0}}, p2g={"F2": 0.6})


def two_region_doc():
    """Two-region network with one tie of every kind.

    Attacking region: buses i, a, k and nodes m, u, o, w.  Tie elements:
    line i-j, pipeline m-n and compressor u-v.  The unit at bus k burns gas
    from node q outside; node o feeds a unit at bus l outside.
    """
    B = lambda b: {"id": b}  # noqa: E731
    power = {
        "buses": [B(b) for b in ("i", "a", "k", "j", "b", "l")],
        "lines": [{"id": f"L{x}{y}", "from_bus": x, "to_bus": y, "g": 1.0, "b": -10.0}
                  for x, y in (("i", "a"), ("a", "k"), ("i", "j"), ("j", "b"), ("b", "l"))],
        "generators": [{"id": "Gk", "bus": "k", "kind": "gas", "gamma": 1.0, "gas_node": "q"},
                       {"id": "Gl", "bus": "l", "kind": "gas", "gamma": 1.0, "gas_node": "o"},
                       {"id": "Gb", "bus": "b", "kind": "coal"}],
        "loads": [{"id": "Da", "bus": "a", "p": 0.3, "q": 0.1}, {"id": "Dj", "bus": "j", "p": 0.3, "q": 0.1}],
        "reference_bus": "b",
    }
    N = lambda n: {"id": n, "pi_min": 1.0, "pi_max": 50.0}  # noqa: E731
    gas = {
        "nodes": [N(n) for n in ("m", "u", "o", "w", "n", "v", "q")],
        "pipelines": [{"id": f"P{x}{y}", "from_node": x, "to_node": y, "weymouth": 1.0}
                      for x, y in (("w", "m"), ("w", "o"), ("w", "u"), ("m", "n"), ("v", "q"))],
        "compressors": [{"id": "Cuv", "from_node": "u", "to_node": "v", "ratio": 1.5}],
        "wells": [{"id": "GWw", "node": "w"}],
        "loads": [{"id": "GDn", "node": "n", "g": 1.0}],
    }
    return _doc(power, gas)


@pytest.fixture
def toy2():
    return load_model(json.dumps(toy2_doc()))


@pytest.fixture
def toy_p2g():
    return load_model(json.dumps(toy_p2g_doc()))


@pytest.fixture
def two_region():
    return model_from_dict(two_region_doc())


def rng(seed=0):
    return np.random.default_rng(seed)


def _jiggle(rec, g, skip=("id",)):
    """Scale every numeric field of a record (recursively) by a random factor."""
    out = {}
    for k, v in rec.items():
        if k in skip or isinstance(v, (bool, str)) or v is None:
            out[k] = v
        elif isinstance(v, (int, float)):
            out[k] = v * g.uniform(0.5, 1.5)
        elif isinstance(v, dict):
            out[k] = _jiggle(v, g, skip)
        elif isinstance(v, list):
            out[k] = (np.asarray(v, dtype=float) * g.uniform(0.5, 1.5, np.shape(v))).tolist()
        else:
            out[k] = v
    return out


def randomize_outside(model, buses=(), nodes=(), seed=0):
    """Copy of ``model`` with every parameter outside the region randomized."""
    from iegs.netmodel import model_to_dict

    g = np.random.default_rng(seed)
    R_b, R_n = set(buses), set(nodes)
    d = model_to_dict(model)
    pw, gs = d["power"], d["gas"]
    pw["buses"] = [b if b["id"] in R_b else _jiggle(b, g) for b in pw["buses"]]
    pw["lines"] = [l if l["from_bus"] in R_b and l["to_bus"] in R_b else _jiggle(l, g) for l in pw["lines"]]
    pw["generators"] = [x if x["bus"] in R_b else _jiggle(x, g) for x in pw["generators"]]
    pw["loads"] = [x if x["bus"] in R_b else _jiggle(x, g) for x in pw["loads"]]
    gs["nodes"] = [n if n["id"] in R_n else _jiggle(n, g) for n in gs["nodes"]]
    for key in ("pipelines", "compressors"):
        gs[key] = [e if e["from_node"] in R_n and e["to_node"] in R_n else _jiggle(e, g) for e in gs[key]]
    for key in ("wells", "loads"):
        gs[key] = [x if x["node"] in R_n else _jiggle(x, g) for x in gs[key]]
    d["coupling"]["p2g"] = [f if f["bus"] in R_b and f["node"] in R_n else _jiggle(f, g)
                            for f in d["coupling"]["p2g"]]
    return model_from_dict(d)
