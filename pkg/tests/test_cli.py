import json

import pytest

from conftest import toy2_doc
from iegs import fixture_path
from iegs.cli import main
from iegs.documents import MEASUREMENT_SCHEMA

MODEL = str(fixture_path("iegs-9-7"))
SCENARIO = str(fixture_path("iegs-9-7", scenario=True))


def load(path):
    return json.loads(path.read_text())


def simulate(out, *extra):
    assert main(["simulate", "--model", MODEL, "--scenario", SCENARIO, "--out", str(out), *extra]) == 0
    return out / "measurements.json"


@pytest.fixture(scope="module")
def noisy(tmp_path_factory):
    return simulate(tmp_path_factory.mktemp("sim"), "--noise", "low", "--seed", "3")


def test_simulate_documents(tmp_path):
    meas = simulate(tmp_path, "--seed", "1")
    state = load(tmp_path / "state.json")
    assert state["mismatch"] < 1e-8 and "v:1" in state["state"]
    assert load(meas)["schema"] == MEASUREMENT_SCHEMA


def test_simulate_deterministic(tmp_path):
    a = simulate(tmp_path / "a", "--noise", "high", "--seed", "7").read_bytes()
    b = simulate(tmp_path / "b", "--noise", "high", "--seed", "7").read_bytes()
    c = simulate(tmp_path / "c", "--noise", "high", "--seed", "8").read_bytes()
    assert a == b and a != c


def test_corrupt_model_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["simulate", "--model", str(bad), "--scenario", SCENARIO, "--out", str(tmp_path)]) == 2
    assert "input error" in capsys.readouterr().err


def test_mismatched_measurements_exit_2(tmp_path):
    meas = tmp_path / "m.json"
    meas.write_text(json.dumps({"schema": MEASUREMENT_SCHEMA, "meters": []}))
    assert main(["estimate", "--model", MODEL, "--measurements", str(meas), "--out", str(tmp_path)]) == 2


def test_estimate_modes(tmp_path, noisy):
    for mode in ("pse", "ose"):
        assert main(["estimate", "--model", MODEL, "--measurements", str(noisy), "--mode", mode,
                     "--out", str(tmp_path / mode)]) == 0
    pse, ose = load(tmp_path / "pse" / "estimate.json"), load(tmp_path / "ose" / "estimate.json")
    assert pse["rc_norm"] <= 1e-8 and ose["rc_norm"] > 1e-5
    assert load(tmp_path / "ose" / "verdict.json")["coupling_inconsistency"]
    assert set(pse["compressors"]) == {"C3-5", "C4-2a"}


def test_estimate_noiseless(tmp_path):
    meas = simulate(tmp_path, "--noise", "none")
    assert main(["estimate", "--model", MODEL, "--measurements", str(meas), "--out", str(tmp_path)]) == 0
    assert load(tmp_path / "estimate.json")["objective"] < 1e-12


def test_solver_failure_exit_3(tmp_path, capsys):
    doc = toy2_doc()
    doc["measurement_plan"] = [{"kind": "v_mag", "element": "1", "std": 0.01},
                               {"kind": "pi", "element": "n1", "std": 0.01}]
    model = tmp_path / "model.json"
    model.write_text(json.dumps(doc))
    meas = tmp_path / "m.json"
    meas.write_text(json.dumps({"schema": MEASUREMENT_SCHEMA, "meters": [
        {"id": "v_mag:1", "z": 1.0, "variance": 1e-4}, {"id": "pi:n1", "z": 10.0, "variance": 1e-4}]}))
    assert main(["estimate", "--model", str(model), "--measurements", str(meas), "--out", str(tmp_path)]) == 3
    assert "solver failure" in capsys.readouterr().err


def attack(tmp_path, meas, spec, knowledge, name="run"):
    path = tmp_path / f"{name}.spec.json"
    path.write_text(json.dumps(spec))
    out = tmp_path / name
    code = main(["attack", "--model", MODEL, "--measurements", str(meas), "--knowledge", knowledge,
                 "--attack-spec", str(path), "--seed", "1", "--label", name, "--out", str(out)])
    return code, out


def test_topology_power_target_exit_4(tmp_path, noisy, capsys):
    spec = {"targets": [{"id": "p_inj:5", "offset": 0.1}], "region": {"nodes": ["n3", "n5"]}}
    code, _ = attack(tmp_path, noisy, spec, "topology")
    assert code == 4 and "no feasible FDIA" in capsys.readouterr().err


def test_complete_voltage_target(tmp_path, noisy):
    code, out = attack(tmp_path, noisy, {"targets": [{"id": "v:5", "offset": 0.01}]}, "complete")
    assert code == 0
    ver = load(out / "verification.json")
    assert ver["stealthy"] and abs(ver["r_after"] - ver["r_before"]) <= 1e-6
    assert "v:5" in ver["affected_states"]


def test_zero_offset_zero_attack(tmp_path, noisy):
    code, out = attack(tmp_path, noisy, {"targets": [{"id": "p_inj:5", "offset": 0.0}]}, "complete")
    assert code == 0
    assert load(out / "attack.json")["dz"] == {}
    assert load(out / "verification.json")["affected_states"] == []


def test_topology_and_local_attacks(tmp_path, noisy):
    code, out = attack(tmp_path, noisy, {"targets": [{"id": "c:C3-5", "offset": 0.1}]}, "topology", "topo")
    assert code == 0
    ver = load(out / "verification.json")
    assert ver["affected_states"] == ["c:C3-5"] and ver["stealthy"]
    spec = {"region": {"buses": ["4", "5", "6"], "nodes": ["n5", "n6", "n7"]}, "scale": 5e-4}
    code, out = attack(tmp_path, noisy, spec, "local", "local")
    assert code == 0 and load(out / "verification.json")["stealthy"]


def test_attack_deterministic(tmp_path, noisy):
    spec = {"region": {"buses": ["4", "5", "6"], "nodes": ["n5", "n6", "n7"]}}
    _, a = attack(tmp_path, noisy, spec, "local", "a")
    _, b = attack(tmp_path, noisy, spec, "local", "b")
    assert (a / "attack.json").read_bytes() == (b / "attack.json").read_bytes()


def test_report(tmp_path, noisy, capsys):
    _, out = attack(tmp_path, noisy, {"targets": [{"id": "v:5", "offset": 0.01}]}, "complete", "s1")
    capsys.readouterr()
    assert main(["report", str(out / "verification.json"), "--out", str(tmp_path / "rep")]) == 0
    rows = load(tmp_path / "rep" / "report.json")["rows"]
    assert rows[0]["scenario"] == "s1" and rows[0]["targets"] == ["v:5"]
    assert "s1" in capsys.readouterr().out
    assert main(["report", str(noisy), "--out", str(tmp_path / "rep2")]) == 2
