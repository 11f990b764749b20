"""Network data model for integrated electricity-gas systems.

The model is a set of frozen dataclasses loaded from a JSON document.  All
element ids are strings; collections are tuples so a loaded model is
immutable and can be shared between workers.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from typing import Any, Iterable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ModelError, ModelParseError

SCHEMA = "iegs-model/1"

POWER_KINDS = (
    "p_inj", "q_inj",
    "p_flow_fwd", "p_flow_rev", "q_flow_fwd", "q_flow_rev",
    "v_mag", "theta_pmu",
)
GAS_KINDS = ("g_inj", "g_flow_pipe", "g_flow_comp", "pi")
MEASUREMENT_KINDS = POWER_KINDS + GAS_KINDS

INF = math.inf


# --------------------------------------------------------------------------
# power side


@dataclass(frozen=True)
class Bus:
    id: str
    v_min: float = 0.9
    v_max: float = 1.1
    theta_max: float = math.pi
    p_min: float = -INF
    p_max: float = INF
    q_min: float = -INF
    q_max: float = INF
    pmu: bool = False


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    g: float
    b: float
    s_max: float = INF


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    kind: str = "coal"  # "coal" | "gas"
    p_min: float = 0.0
    p_max: float = INF
    gamma: float | None = None
    gas_node: str | None = None


@dataclass(frozen=True)
class PowerLoad:
    id: str
    bus: str
    p: float
    q: float = 0.0


@dataclass(frozen=True)
class PowerNetwork:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...] = ()
    loads: tuple[PowerLoad, ...] = ()
    reference_bus: str | None = None

    @cached_property
    def bus_index(self) -> dict[str, int]:
        return {b.id: k for k, b in enumerate(self.buses)}

    @cached_property
    def line_index(self) -> dict[str, int]:
        return {l.id: k for k, l in enumerate(self.lines)}


# --------------------------------------------------------------------------
# gas side


@dataclass(frozen=True)
class DetailedCompressorParams:
    kind: str  # "turbo" | "piston"
    R_s: float
    T: float
    T_c: float
    T_a: float
    pi_c: float
    kappa: float
    V0: float = 1.0
    eta_bar: float = 0.8
    n_min: float = 0.0
    n_max: float = INF
    a1: tuple[float, float, float] = (0.0, 0.0, 0.0)
    a2: tuple[float, float, float] = (0.0, 0.0, -INF)
    a3: tuple[float, float, float] = (0.0, 0.0, INF)
    A1: tuple[tuple[float, ...], ...] = ((0.0,) * 3,) * 3
    A2: tuple[tuple[float, ...], ...] = ((0.0,) * 3,) * 3
    A3: tuple[tuple[float, ...], ...] = ((0.0,) * 3,) * 3


@dataclass(frozen=True)
class GasNode:
    id: str
    pi_min: float = 0.0
    pi_max: float = INF
    g_min: float = -INF
    g_max: float = INF


@dataclass(frozen=True)
class Pipeline:
    id: str
    from_node: str
    to_node: str
    weymouth: float
    g_max: float = INF


@dataclass(frozen=True)
class Compressor:
    id: str
    from_node: str
    to_node: str
    ratio: float = 1.5
    c_max: float = INF
    detailed: DetailedCompressorParams | None = None


@dataclass(frozen=True)
class Well:
    id: str
    node: str
    g_max: float = INF


@dataclass(frozen=True)
class GasLoad:
    id: str
    node: str
    g: float


@dataclass(frozen=True)
class GasNetwork:
    nodes: tuple[GasNode, ...]
    pipelines: tuple[Pipeline, ...] = ()
    compressors: tuple[Compressor, ...] = ()
    wells: tuple[Well, ...] = ()
    loads: tuple[GasLoad, ...] = ()

    @cached_property
    def node_index(self) -> dict[str, int]:
        return {n.id: k for k, n in enumerate(self.nodes)}

    @cached_property
    def pipeline_index(self) -> dict[str, int]:
        return {p.id: k for k, p in enumerate(self.pipelines)}

    @cached_property
    def compressor_index(self) -> dict[str, int]:
        return {c.id: k for k, c in enumerate(self.compressors)}


@dataclass(frozen=True)
class P2GFacility:
    id: str
    bus: str
    node: str
    chi: float
    p_max: float = INF


# --------------------------------------------------------------------------
# measurements and the assembled model


@dataclass(frozen=True)
class Meter:
    kind: str
    element: str
    std: float


@dataclass(frozen=True)
class IegsModel:
    power: PowerNetwork
    gas: GasNetwork
    p2g: tuple[P2GFacility, ...] = ()
    plan: tuple[Meter, ...] = ()
    bases: dict = field(default_factory=dict, compare=True, hash=False)

    @property
    def n_buses(self) -> int:
        return len(self.power.buses)

    @property
    def n_nodes(self) -> int:
        return len(self.gas.nodes)

    @property
    def n_compressors(self) -> int:
        return len(self.gas.compressors)

    @property
    def n_state(self) -> int:
        return 2 * self.n_buses + self.n_compressors + self.n_nodes

    @cached_property
    def equations(self):
        # compiled evaluator, built lazily and cached on the (immutable) model
        from .meas import NetworkEquations

        return NetworkEquations(self)

    @cached_property
    def meter_index(self) -> dict[tuple[str, str], int]:
        return {(m.kind, m.element): k for k, m in enumerate(self.plan)}

    def state_labels(self) -> list[str]:
        return (
            [f"v:{b.id}" for b in self.power.buses]
            + [f"theta:{b.id}" for b in self.power.buses]
            + [f"c:{c.id}" for c in self.gas.compressors]
            + [f"pi:{n.id}" for n in self.gas.nodes]
        )

    def state_index(self, kind: str, element: str) -> int:
        nb = self.n_buses
        if kind == "v":
            return self.power.bus_index[element]
        if kind == "theta":
            return nb + self.power.bus_index[element]
        if kind == "c":
            return 2 * nb + self.gas.compressor_index[element]
        if kind == "pi":
            return 2 * nb + self.n_compressors + self.gas.node_index[element]
        raise KeyError(f"unknown state kind {kind!r}")

    def meter_labels(self) -> list[str]:
        return [f"{m.kind}:{m.element}" for m in self.plan]

    def with_plan(self, plan: Iterable[Meter]) -> "IegsModel":
        return replace(self, plan=tuple(plan))


# --------------------------------------------------------------------------
# coupling pairs


@dataclass(frozen=True)
class CouplingPair:
    bus: str
    node: str
    device: str
    ratio: float
    kind: str  # "gas_fired" | "p2g"


@dataclass(frozen=True)
class CouplingMap:
    pairs: tuple[CouplingPair, ...]
    soft_coupled: tuple[str, ...]

    @property
    def gas_fired(self) -> tuple[CouplingPair, ...]:
        return tuple(p for p in self.pairs if p.kind == "gas_fired")

    @property
    def p2g(self) -> tuple[CouplingPair, ...]:
        return tuple(p for p in self.pairs if p.kind == "p2g")


def _devices(model: IegsModel):
    at_bus: dict[str, list[str]] = {}
    at_node: dict[str, list[str]] = {}
    for g in model.power.generators:
        at_bus.setdefault(g.bus, []).append(g.id)
        if g.kind == "gas" and g.gas_node is not None:
            at_node.setdefault(g.gas_node, []).append(g.id)
    for d in model.power.loads:
        at_bus.setdefault(d.bus, []).append(d.id)
    for w in model.gas.wells:
        at_node.setdefault(w.node, []).append(w.id)
    for d in model.gas.loads:
        at_node.setdefault(d.node, []).append(d.id)
    for f in model.p2g:
        at_bus.setdefault(f.bus, []).append(f.id)
        at_node.setdefault(f.node, []).append(f.id)
    return at_bus, at_node


def coupling_pairs(model: IegsModel) -> CouplingMap:
    """Bus/node pairs whose gas-fired unit (or P2G facility) is the sole device at both ends.

    A gas-fired generator failing the condition is reported as soft-coupled:
    it still draws gas in the dispatch balance but yields no coupling row.
    """
    at_bus, at_node = _devices(model)
    buses = model.power.bus_index
    nodes = model.gas.node_index
    pairs, soft = [], []
    for g in model.power.generators:
        if g.kind != "gas":
            continue
        ok = (
            g.gas_node in nodes
            and g.bus in buses
            and at_bus.get(g.bus) == [g.id]
            and at_node.get(g.gas_node) == [g.id]
        )
        if ok:
            pairs.append(CouplingPair(g.bus, g.gas_node, g.id, float(g.gamma), "gas_fired"))
        else:
            soft.append(g.id)
    for f in model.p2g:
        if at_bus.get(f.bus) == [f.id] and at_node.get(f.node) == [f.id] and f.bus in buses and f.node in nodes:
            pairs.append(CouplingPair(f.bus, f.node, f.id, float(f.chi), "p2g"))
        else:
            soft.append(f.id)
    return CouplingMap(tuple(pairs), tuple(soft))


# --------------------------------------------------------------------------
# incidence matrices


def incidence_matrices(model: IegsModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Signed incidence matrices: +1 where an element leaves a node, -1 where it enters."""
    nb, nn = model.n_buses, model.n_nodes
    bi, ni = model.power.bus_index, model.gas.node_index
    B_p = np.zeros((nb, len(model.power.lines)), dtype=int)
    for k, l in enumerate(model.power.lines):
        B_p[bi[l.from_bus], k] = 1
        B_p[bi[l.to_bus], k] = -1
    B_pipe = np.zeros((nn, len(model.gas.pipelines)), dtype=int)
    for k, p in enumerate(model.gas.pipelines):
        B_pipe[ni[p.from_node], k] = 1
        B_pipe[ni[p.to_node], k] = -1
    B_comp = np.zeros((nn, len(model.gas.compressors)), dtype=int)
    for k, c in enumerate(model.gas.compressors):
        B_comp[ni[c.from_node], k] = 1
        B_comp[ni[c.to_node], k] = -1
    return B_p, B_pipe, B_comp


def _n_components(n: int, edges: list[tuple[int, int]]) -> int:
    if n == 0:
        return 0
    if not edges:
        return n
    i, j = np.array(edges).T
    adj = coo_matrix((np.ones(len(edges)), (i, j)), shape=(n, n))
    return connected_components(adj, directed=False)[0]


# --------------------------------------------------------------------------
# validation


def validate_model(model: IegsModel) -> list[str]:
    """Return one message per violated invariant; empty when the model is valid."""
    out: list[str] = []
    pw, gs = model.power, model.gas

    def dup(kind, ids):
        seen = set()
        for i in ids:
            if i in seen:
                out.append(f"{kind} {i}: duplicate id")
            seen.add(i)

    dup("bus", [b.id for b in pw.buses])
    dup("line", [l.id for l in pw.lines])
    dup("gas node", [n.id for n in gs.nodes])
    dup("pipeline", [p.id for p in gs.pipelines])
    dup("compressor", [c.id for c in gs.compressors])

    buses, nodes = pw.bus_index, gs.node_index
    for b in pw.buses:
        if b.v_min > b.v_max:
            out.append(f"bus {b.id}: v_min exceeds v_max")
    for l in pw.lines:
        if l.from_bus not in buses or l.to_bus not in buses:
            out.append(f"line {l.id}: unknown bus")
        elif l.from_bus == l.to_bus:
            out.append(f"line {l.id}: self loop")
        if not (math.isfinite(l.g) and math.isfinite(l.b)):
            out.append(f"line {l.id}: admittance must be finite")
    for g in pw.generators:
        if g.bus not in buses:
            out.append(f"generator {g.id}: unknown bus {g.bus}")
        if g.kind not in ("coal", "gas"):
            out.append(f"generator {g.id}: kind must be 'coal' or 'gas'")
        if g.kind == "gas":
            if g.gas_node not in nodes:
                out.append(f"generator {g.id}: gas-fired generator must reference a gas node")
            if g.gamma is None or not g.gamma > 0:
                out.append(f"generator {g.id}: conversion ratio must be positive")
    for d in pw.loads:
        if d.bus not in buses:
            out.append(f"load {d.id}: unknown bus {d.bus}")
    if pw.buses:
        edges = [(buses[l.from_bus], buses[l.to_bus]) for l in pw.lines
                 if l.from_bus in buses and l.to_bus in buses]
        if _n_components(len(pw.buses), edges) > 1:
            out.append("power graph disconnected")
        if not any(b.pmu for b in pw.buses) and pw.reference_bus is None:
            out.append("power network needs a PMU bus or a reference bus")
    if pw.reference_bus is not None and pw.reference_bus not in buses:
        out.append(f"reference bus {pw.reference_bus}: unknown bus")

    for p in gs.pipelines:
        if p.from_node not in nodes or p.to_node not in nodes:
            out.append(f"pipeline {p.id}: unknown node")
        if not (p.weymouth > 0 and math.isfinite(p.weymouth)):
            out.append(f"pipeline {p.id}: Weymouth constant must be positive")
    for c in gs.compressors:
        if c.from_node not in nodes or c.to_node not in nodes:
            out.append(f"compressor {c.id}: unknown node")
        if not c.ratio >= 1.0:
            out.append(f"compressor {c.id}: compression ratio < 1")
        if c.detailed is not None:
            out.extend(f"compressor {c.id}: {m}" for m in _check_detailed(c.detailed))
    for w in gs.wells:
        if w.node not in nodes:
            out.append(f"well {w.id}: unknown node {w.node}")
    for d in gs.loads:
        if d.node not in nodes:
            out.append(f"gas load {d.id}: unknown node {d.node}")
    if gs.nodes:
        edges = [(nodes[e.from_node], nodes[e.to_node])
                 for e in (*gs.pipelines, *gs.compressors)
                 if e.from_node in nodes and e.to_node in nodes]
        if _n_components(len(gs.nodes), edges) > 1:
            out.append("gas graph disconnected")

    for f in model.p2g:
        if f.bus not in buses or f.node not in nodes:
            out.append(f"p2g {f.id}: unknown bus or node")
        if not f.chi > 0:
            out.append(f"p2g {f.id}: conversion ratio must be positive")

    elements = {
        "bus": set(buses), "line": set(pw.line_index),
        "node": set(nodes), "pipe": set(gs.pipeline_index), "comp": set(gs.compressor_index),
    }
    for m in model.plan:
        if m.kind not in MEASUREMENT_KINDS:
            out.append(f"meter {m.kind}:{m.element}: unknown kind")
            continue
        if m.element not in elements[_meter_domain(m.kind)]:
            out.append(f"meter {m.kind}:{m.element}: unknown element")
        if not m.std > 0:
            out.append(f"meter {m.kind}:{m.element}: noise std must be positive")
        if m.kind == "theta_pmu" and m.element in buses and not pw.buses[buses[m.element]].pmu:
            out.append(f"meter {m.kind}:{m.element}: bus has no PMU")
    dup("meter", [f"{m.kind}:{m.element}" for m in model.plan])
    return out


def _check_detailed(p: DetailedCompressorParams) -> list[str]:
    out = []
    if p.kind not in ("turbo", "piston"):
        out.append("detailed kind must be 'turbo' or 'piston'")
    if not p.kappa > 1:
        out.append("isentropic exponent must exceed 1")
    if p.n_min > p.n_max:
        out.append("speed limits inverted")
    if not p.V0 > 0:
        out.append("operating volume must be positive")
    return out


def _meter_domain(kind: str) -> str:
    if kind in ("p_inj", "q_inj", "v_mag", "theta_pmu"):
        return "bus"
    if kind.startswith(("p_flow", "q_flow")):
        return "line"
    if kind in ("g_inj", "pi"):
        return "node"
    return "pipe" if kind == "g_flow_pipe" else "comp"


# --------------------------------------------------------------------------
# measurement plans


def default_plan(power: PowerNetwork, gas: GasNetwork, std: dict | float = 0.01) -> tuple[Meter, ...]:
    """Full meter set: both-end line flows, all injections, voltages, PMU angles,
    pipeline and compressor flows, gas injections and nodal pressures."""
    if not isinstance(std, dict):
        std = {k: float(std) for k in MEASUREMENT_KINDS}
    s = lambda k: float(std.get(k, std.get("default", 0.01)))  # noqa: E731
    plan = []
    plan += [Meter("p_inj", b.id, s("p_inj")) for b in power.buses]
    plan += [Meter("q_inj", b.id, s("q_inj")) for b in power.buses]
    for kind in ("p_flow_fwd", "p_flow_rev", "q_flow_fwd", "q_flow_rev"):
        plan += [Meter(kind, l.id, s(kind)) for l in power.lines]
    plan += [Meter("v_mag", b.id, s("v_mag")) for b in power.buses]
    plan += [Meter("theta_pmu", b.id, s("theta_pmu")) for b in power.buses if b.pmu]
    plan += [Meter("g_inj", n.id, s("g_inj")) for n in gas.nodes]
    plan += [Meter("g_flow_pipe", p.id, s("g_flow_pipe")) for p in gas.pipelines]
    plan += [Meter("g_flow_comp", c.id, s("g_flow_comp")) for c in gas.compressors]
    plan += [Meter("pi", n.id, s("pi")) for n in gas.nodes]
    return tuple(plan)


# --------------------------------------------------------------------------
# JSON document I/O


def _num(v, default=None):
    if v is None:
        return default
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ModelParseError(f"expected a number, got {v!r}")
    return float(v)


def _bound(v, default):
    return default if v is None else _num(v)


def _build(cls, raw: dict, where: str, numeric=(), bounds=None, strings=()):
    if not isinstance(raw, dict):
        raise ModelParseError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    extra = set(raw) - known
    if extra:
        raise ModelParseError(f"{where}: unknown keys {sorted(extra)}")
    kw: dict[str, Any] = {}
    try:
        for k, v in raw.items():
            if k in strings:
                kw[k] = None if v is None else str(v)
            elif bounds and k in bounds:
                kw[k] = _bound(v, bounds[k])
            elif k in numeric:
                kw[k] = _num(v)
            else:
                kw[k] = v
        return cls(**kw)
    except TypeError as exc:
        raise ModelParseError(f"{where}: {exc}") from None
    except ModelParseError as exc:
        raise ModelParseError(f"{where}: {exc}") from None


_INF_DEFAULTS = {
    "p_min": -INF, "p_max": INF, "q_min": -INF, "q_max": INF, "s_max": INF,
    "g_min": -INF, "g_max": INF, "pi_max": INF, "c_max": INF, "n_max": INF,
}


def _detailed(raw: dict, where: str) -> DetailedCompressorParams:
    raw = dict(raw)
    for k in ("a1", "a2", "a3"):
        if k in raw:
            raw[k] = tuple(-INF if v is None and k == "a2" else INF if v is None else float(v) for v in raw[k])
    for k in ("A1", "A2", "A3"):
        if k in raw:
            raw[k] = tuple(tuple(float(v) for v in row) for row in raw[k])
    return _build(
        DetailedCompressorParams, raw, where,
        numeric=("R_s", "T", "T_c", "T_a", "pi_c", "kappa", "V0", "eta_bar", "n_min"),
        bounds={"n_max": INF}, strings=("kind",),
    )


def model_from_dict(doc: dict) -> IegsModel:
    """Build a model from a parsed document without validating it."""
    if not isinstance(doc, dict):
        raise ModelParseError("model document must be a JSON object")
    for key in ("power", "gas"):
        if key not in doc:
            raise ModelParseError(f"missing top-level key {key!r}")
    extra = set(doc) - {"schema", "power", "gas", "coupling", "measurement_plan", "bases"}
    if extra:
        raise ModelParseError(f"unknown top-level keys {sorted(extra)}")
    schema = doc.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ModelParseError(f"unsupported schema {schema!r}")

    p, g = doc["power"], doc["gas"]
    try:
        buses = tuple(
            _build(Bus, b, f"power.buses[{k}]", numeric=("v_min", "v_max", "theta_max"),
                   bounds=_INF_DEFAULTS, strings=("id",))
            for k, b in enumerate(p.get("buses", [])))
        lines = tuple(
            _build(Line, l, f"power.lines[{k}]", numeric=("g", "b"), bounds=_INF_DEFAULTS,
                   strings=("id", "from_bus", "to_bus"))
            for k, l in enumerate(p.get("lines", [])))
        gens = tuple(
            _build(Generator, x, f"power.generators[{k}]", numeric=("p_min", "gamma"),
                   bounds=_INF_DEFAULTS, strings=("id", "bus", "kind", "gas_node"))
            for k, x in enumerate(p.get("generators", [])))
        ploads = tuple(
            _build(PowerLoad, x, f"power.loads[{k}]", numeric=("p", "q"), strings=("id", "bus"))
            for k, x in enumerate(p.get("loads", [])))
        ref = p.get("reference_bus")
        power = PowerNetwork(buses, lines, gens, ploads, None if ref is None else str(ref))

        nodes = tuple(
            _build(GasNode, n, f"gas.nodes[{k}]", numeric=("pi_min",), bounds=_INF_DEFAULTS,
                   strings=("id",))
            for k, n in enumerate(g.get("nodes", [])))
        pipes = tuple(
            _build(Pipeline, x, f"gas.pipelines[{k}]", numeric=("weymouth",), bounds=_INF_DEFAULTS,
                   strings=("id", "from_node", "to_node"))
            for k, x in enumerate(g.get("pipelines", [])))
        comps = []
        for k, x in enumerate(g.get("compressors", [])):
            x = dict(x)
            det = x.pop("detailed", None)
            c = _build(Compressor, x, f"gas.compressors[{k}]", numeric=("ratio",),
                       bounds=_INF_DEFAULTS, strings=("id", "from_node", "to_node"))
            if det is not None:
                c = replace(c, detailed=_detailed(det, f"gas.compressors[{k}].detailed"))
            comps.append(c)
        wells = tuple(
            _build(Well, x, f"gas.wells[{k}]", bounds=_INF_DEFAULTS, strings=("id", "node"))
            for k, x in enumerate(g.get("wells", [])))
        gloads = tuple(
            _build(GasLoad, x, f"gas.loads[{k}]", numeric=("g",), strings=("id", "node"))
            for k, x in enumerate(g.get("loads", [])))
        gas = GasNetwork(nodes, pipes, tuple(comps), wells, gloads)

        coupling = doc.get("coupling", {}) or {}
        p2g = tuple(
            _build(P2GFacility, x, f"coupling.p2g[{k}]", numeric=("chi",), bounds=_INF_DEFAULTS,
                   strings=("id", "bus", "node"))
            for k, x in enumerate(coupling.get("p2g", [])))
    except (AttributeError, TypeError) as exc:
        raise ModelParseError(f"malformed document: {exc}") from None

    raw_plan = doc.get("measurement_plan", {"preset": "full"})
    if isinstance(raw_plan, dict):
        if raw_plan.get("preset", "full") != "full":
            raise ModelParseError(f"unknown measurement preset {raw_plan.get('preset')!r}")
        plan = default_plan(power, gas, raw_plan.get("std", 0.01))
    elif isinstance(raw_plan, list):
        plan = tuple(
            _build(Meter, m, f"measurement_plan[{k}]", numeric=("std",), strings=("kind", "element"))
            for k, m in enumerate(raw_plan))
    else:
        raise ModelParseError("measurement_plan must be a list or a preset object")
    return IegsModel(power, gas, p2g, plan, dict(doc.get("bases", {})))


def load_model(text: str) -> IegsModel:
    """Parse and validate a model document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"invalid JSON: {exc}") from None
    model = model_from_dict(doc)
    violations = validate_model(model)
    if violations:
        raise ModelError("invalid model", violations)
    return model


def read_model(path) -> IegsModel:
    with open(path) as fh:
        return load_model(fh.read())


def _enc(v):
    if isinstance(v, float) and math.isinf(v):
        return None
    if isinstance(v, tuple):
        return [_enc(x) for x in v]
    return v


def _obj(x, skip=()) -> dict:
    return {f.name: _enc(getattr(x, f.name)) for f in fields(x) if f.name not in skip}


def model_to_dict(model: IegsModel) -> dict:
    comps = []
    for c in model.gas.compressors:
        d = _obj(c, skip=("detailed",))
        if c.detailed is not None:
            d["detailed"] = _obj(c.detailed)
        comps.append(d)
    return {
        "schema": SCHEMA,
        "bases": dict(model.bases),
        "power": {
            "reference_bus": model.power.reference_bus,
            "buses": [_obj(b) for b in model.power.buses],
            "lines": [_obj(l) for l in model.power.lines],
            "generators": [_obj(g) for g in model.power.generators],
            "loads": [_obj(d) for d in model.power.loads],
        },
        "gas": {
            "nodes": [_obj(n) for n in model.gas.nodes],
            "pipelines": [_obj(p) for p in model.gas.pipelines],
            "compressors": comps,
            "wells": [_obj(w) for w in model.gas.wells],
            "loads": [_obj(d) for d in model.gas.loads],
        },
        "coupling": {"p2g": [_obj(f) for f in model.p2g]},
        "measurement_plan": [_obj(m) for m in model.plan],
    }


def serialize_model(model: IegsModel) -> str:
    return json.dumps(model_to_dict(model), indent=1, sort_keys=True)


# --------------------------------------------------------------------------
# subsystem views


def power_only(model: IegsModel) -> IegsModel:
    """The power half of ``model`` with an empty gas network and power meters only."""
    plan = tuple(m for m in model.plan if m.kind in POWER_KINDS)
    return IegsModel(model.power, GasNetwork(()), (), plan, dict(model.bases))


def gas_only(model: IegsModel) -> IegsModel:
    """The gas half of ``model`` with an empty power network and gas meters only."""
    plan = tuple(m for m in model.plan if m.kind in GAS_KINDS)
    return IegsModel(PowerNetwork((), ()), model.gas, (), plan, dict(model.bases))
