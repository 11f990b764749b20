"""Attacks by an intruder who only knows one region of the network.

The attacking region is a set of buses and gas nodes.  Its boundary holds
the region endpoints of tie lines (lines, pipelines or compressors with one
end outside), the region buses hosting gas-fired units and the region nodes
feeding them.  Injection meters at boundary points form ``z_B``; all other
meters inside the region form ``z_A``; everything else is ``z_N``.

``LocalView`` is the region's own sub-network, assembled by reading region
elements only.  Attacks are computed on that view, so no parameter outside
the region can influence them.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .attack_full import AttackVector
from .errors import ConvergenceError
from .estimator import EPSILON, EstimationResult, estimate_iegs
from .netmodel import GasNetwork, IegsModel, PowerNetwork

_BUS_METERS = ("p_inj", "q_inj", "v_mag", "theta_pmu")
_LINE_METERS = ("p_flow_fwd", "p_flow_rev", "q_flow_fwd", "q_flow_rev")


@dataclass(frozen=True)
class RegionPartition:
    buses: tuple
    nodes: tuple
    boundary_buses: dict  # bus id -> sorted tuple of kinds ("i", "ii", "p2g")
    boundary_nodes: dict
    tie_lines: tuple
    tie_pipelines: tuple
    tie_compressors: tuple
    tie_meters: tuple  # (plan index, injection kind, boundary element, sign)
    z_A: np.ndarray = field(compare=False)
    z_B: np.ndarray = field(compare=False)
    z_N: np.ndarray = field(compare=False)
    x_A: np.ndarray = field(compare=False)
    x_B: np.ndarray = field(compare=False)
    x_N: np.ndarray = field(compare=False)

    def to_dict(self, model: IegsModel) -> dict:
        ml, sl = model.meter_labels(), model.state_labels()
        return {
            "buses": list(self.buses), "nodes": list(self.nodes),
            "boundary_buses": {k: list(v) for k, v in self.boundary_buses.items()},
            "boundary_nodes": {k: list(v) for k, v in self.boundary_nodes.items()},
            "tie_lines": list(self.tie_lines), "tie_pipelines": list(self.tie_pipelines),
            "tie_compressors": list(self.tie_compressors),
            "tie_meters": [ml[t[0]] for t in self.tie_meters],
            "z_A": [ml[i] for i in self.z_A], "z_B": [ml[i] for i in self.z_B],
            "z_N": [ml[i] for i in self.z_N],
            "x_A": [sl[i] for i in self.x_A], "x_B": [sl[i] for i in self.x_B],
            "x_N": [sl[i] for i in self.x_N],
            "assumptions": ["tie-line flow meters at the attacking end are readable by the intruder"],
        }


def partition_model(model: IegsModel, buses=(), nodes=()) -> RegionPartition:
    """Classify meters and states for an attacking region."""
    pw, gs = model.power, model.gas
    R_b, R_n = set(map(str, buses)), set(map(str, nodes))
    if not R_b and not R_n:
        raise ValueError("attacking region is empty")
    unknown = [b for b in R_b if b not in pw.bus_index] + [n for n in R_n if n not in gs.node_index]
    if unknown:
        raise KeyError(f"unknown region elements: {sorted(unknown)}")

    bb: dict[str, set] = {}
    bn: dict[str, set] = {}
    tie_l = [l.id for l in pw.lines if (l.from_bus in R_b) != (l.to_bus in R_b)]
    for l in pw.lines:
        if (l.from_bus in R_b) != (l.to_bus in R_b):
            bb.setdefault(l.from_bus if l.from_bus in R_b else l.to_bus, set()).add("i")
    tie_p, tie_c = [], []
    for kind, elems, ties in (("pipe", gs.pipelines, tie_p), ("comp", gs.compressors, tie_c)):
        for e in elems:
            if (e.from_node in R_n) != (e.to_node in R_n):
                ties.append(e.id)
                bn.setdefault(e.from_node if e.from_node in R_n else e.to_node, set()).add("i")
    for g in pw.generators:
        if g.kind == "gas":
            if g.bus in R_b:
                bb.setdefault(g.bus, set()).add("ii")
            if g.gas_node in R_n:
                bn.setdefault(g.gas_node, set()).add("iii")
    for f in model.p2g:
        if f.bus in R_b:
            bb.setdefault(f.bus, set()).add("p2g")
        if f.node in R_n:
            bn.setdefault(f.node, set()).add("p2g")

    internal_lines = {l.id for l in pw.lines if l.from_bus in R_b and l.to_bus in R_b}
    internal_pipes = {p.id for p in gs.pipelines if p.from_node in R_n and p.to_node in R_n}
    internal_comps = {c.id for c in gs.compressors if c.from_node in R_n and c.to_node in R_n}

    zA, zB, zN = [], [], []
    for k, m in enumerate(model.plan):
        if m.kind in ("p_inj", "q_inj") and m.element in bb or m.kind == "g_inj" and m.element in bn:
            zB.append(k)
        elif (m.kind in _BUS_METERS and m.element in R_b
              or m.kind in ("g_inj", "pi") and m.element in R_n
              or m.kind in _LINE_METERS and m.element in internal_lines
              or m.kind == "g_flow_pipe" and m.element in internal_pipes
              or m.kind == "g_flow_comp" and m.element in internal_comps):
            zA.append(k)
        else:
            zN.append(k)

    xA, xB, xN = [], [], []
    for b in pw.buses:
        for kind in ("v", "theta"):
            i = model.state_index(kind, b.id)
            (xB if b.id in bb else xA if b.id in R_b else xN).append(i)
    for c in gs.compressors:
        (xA if c.id in internal_comps else xN).append(model.state_index("c", c.id))
    for n in gs.nodes:
        i = model.state_index("pi", n.id)
        (xB if n.id in bn else xA if n.id in R_n else xN).append(i)

    tie_meters = []
    idx = model.meter_index
    for lid in tie_l:
        l = pw.lines[pw.line_index[lid]]
        end, bus = ("fwd", l.from_bus) if l.from_bus in R_b else ("rev", l.to_bus)
        for q in ("p", "q"):
            k = idx.get((f"{q}_flow_{end}", lid))
            if k is not None:
                tie_meters.append((k, f"{q}_inj", bus, 1.0))
    for kind, ids, table, elems in (("g_flow_pipe", tie_p, gs.pipeline_index, gs.pipelines),
                                    ("g_flow_comp", tie_c, gs.compressor_index, gs.compressors)):
        for eid in ids:
            e = elems[table[eid]]
            k = idx.get((kind, eid))
            if k is not None:
                node, sign = (e.from_node, 1.0) if e.from_node in R_n else (e.to_node, -1.0)
                tie_meters.append((k, "g_inj", node, sign))

    arr = lambda v: np.array(sorted(v), dtype=int)  # noqa: E731
    return RegionPartition(
        buses=tuple(b.id for b in pw.buses if b.id in R_b),
        nodes=tuple(n.id for n in gs.nodes if n.id in R_n),
        boundary_buses={k: tuple(sorted(v)) for k, v in sorted(bb.items())},
        boundary_nodes={k: tuple(sorted(v)) for k, v in sorted(bn.items())},
        tie_lines=tuple(tie_l), tie_pipelines=tuple(tie_p), tie_compressors=tuple(tie_c),
        tie_meters=tuple(tie_meters),
        z_A=arr(zA), z_B=arr(zB), z_N=arr(zN), x_A=arr(xA), x_B=arr(xB), x_N=arr(xN))


class LocalView:
    """The attacking region as a stand-alone model.

    Only buses, nodes, internal lines, pipelines and compressors of the
    region and the devices attached to region buses and nodes are read.
    Gas-fired units whose supply node lies outside the region keep their
    bus but lose the node reference.
    """

    def __init__(self, model: IegsModel, part: RegionPartition):
        pw, gs = model.power, model.gas
        R_b, R_n = set(part.buses), set(part.nodes)
        buses = tuple(pw.buses[pw.bus_index[b]] for b in part.buses)
        lines = tuple(l for l in pw.lines if l.from_bus in R_b and l.to_bus in R_b)
        gens = []
        for g in pw.generators:
            if g.bus in R_b:
                if g.kind == "gas" and g.gas_node not in R_n:
                    g = replace(g, gas_node=None)
                gens.append(g)
        ploads = tuple(d for d in pw.loads if d.bus in R_b)
        ref = pw.reference_bus if pw.reference_bus in R_b else None
        nodes = tuple(gs.nodes[gs.node_index[n]] for n in part.nodes)
        pipes = tuple(p for p in gs.pipelines if p.from_node in R_n and p.to_node in R_n)
        comps = tuple(c for c in gs.compressors if c.from_node in R_n and c.to_node in R_n)
        wells = tuple(w for w in gs.wells if w.node in R_n)
        gloads = tuple(d for d in gs.loads if d.node in R_n)
        p2g = tuple(f for f in model.p2g if f.bus in R_b and f.node in R_n)
        # gas-fired units fed from a region node but sited outside still mark the node
        self.external_feeds = tuple(sorted(
            {g.gas_node for g in pw.generators if g.kind == "gas" and g.gas_node in R_n and g.bus not in R_b}
            | {f.node for f in model.p2g if f.node in R_n and f.bus not in R_b}))
        self.external_sites = tuple(sorted(
            {g.bus for g in pw.generators if g.kind == "gas" and g.bus in R_b and g.gas_node not in R_n}
            | {f.bus for f in model.p2g if f.bus in R_b and f.node not in R_n}))

        local_meters = np.concatenate([part.z_A, part.z_B]).astype(int)
        local_meters.sort()
        plan = tuple(model.plan[k] for k in local_meters)
        self.model = IegsModel(PowerNetwork(buses, lines, tuple(gens), ploads, ref),
                               GasNetwork(nodes, pipes, comps, wells, gloads), p2g, plan,
                               dict(model.bases))
        self.meter_map = local_meters  # local meter k -> full plan index
        self.state_map = np.array(
            [model.state_index("v", b) for b in part.buses]
            + [model.state_index("theta", b) for b in part.buses]
            + [model.state_index("c", c.id) for c in comps]
            + [model.state_index("pi", n) for n in part.nodes], dtype=int)
        self.partition = part
        in_A = set(part.x_A.tolist())
        self.local_A = np.array([k for k, i in enumerate(self.state_map) if i in in_A], dtype=int)

    def local_state(self, x_full) -> np.ndarray:
        return np.asarray(x_full, dtype=float)[self.state_map]

    def _balance_rows(self):
        """Injections whose change must be tied down, with the pairing ratio when both ends are local."""
        m = self.model
        eq = m.equations
        o = eq.offsets
        rows = []  # list of (catalog index, coefficient) groups
        for p in eq.coupling.pairs:
            rows.append([(o["p_inj"] + m.power.bus_index[p.bus], p.ratio),
                         (o["g_inj"] + m.gas.node_index[p.node], 1.0)])
        for b in self.external_sites:
            rows.append([(o["p_inj"] + m.power.bus_index[b], 1.0)])
        for n in self.external_feeds:
            rows.append([(o["g_inj"] + m.gas.node_index[n], 1.0)])
        return rows

    def balance(self, x_loc) -> np.ndarray:
        cat = self.model.equations.catalog(x_loc)
        return np.array([sum(c * cat[i] for i, c in row) for row in self._balance_rows()])

    def balance_jacobian(self, x_loc) -> np.ndarray:
        J = self.model.equations.catalog_jacobian(x_loc)
        rows = self._balance_rows()
        out = np.zeros((len(rows), J.shape[1]))
        for r, row in enumerate(rows):
            for i, c in row:
                out[r] += c * J[i]
        return out


def _region_vector(part: RegionPartition, n_state: int, a, b=None) -> np.ndarray:
    x = np.zeros(n_state)
    x[part.x_A] = np.asarray(a, dtype=float)
    if b is not None:
        x[part.x_B] = np.asarray(b, dtype=float)
    return x


def _project(view: LocalView, x_full, dx_full, tol: float, max_iter: int) -> np.ndarray:
    dx = dx_full.copy()
    x0 = view.local_state(x_full)
    base = view.balance(x0)
    if base.size == 0:
        return dx
    cols = view.local_A
    for _ in range(max_iter):
        xl = x0 + dx[view.state_map]
        c = view.balance(xl) - base
        if np.max(np.abs(c)) < tol:
            return dx
        A = view.balance_jacobian(xl)[:, cols]
        dx[view.state_map[cols]] -= np.linalg.lstsq(A, c, rcond=None)[0]
    raise ConvergenceError("local balance projection did not converge")


def admissible_local_shift(x_hat_A, x_hat_B, dx_A, part: RegionPartition, model: IegsModel,
                           tol: float = 1e-11, max_iter: int = 30) -> np.ndarray:
    """Adjust ``dx_A`` so every coupled injection the region can see keeps its balance.

    Pairs with both ends in the region keep ``ratio*dp + dg`` fixed; a
    coupled injection whose partner lies outside is held fixed.  Arrays are
    aligned with ``part.x_A`` and ``part.x_B``.
    """
    view = LocalView(model, part)
    n = model.n_state
    dx = _project(view, _region_vector(part, n, x_hat_A, x_hat_B),
                  _region_vector(part, n, dx_A), tol, max_iter)
    return dx[part.x_A]


def random_local_shift(x_hat_A, x_hat_B, part: RegionPartition, model: IegsModel,
                       rng: np.random.Generator, scale: float = 1e-3) -> np.ndarray:
    dx_A = scale * rng.standard_normal(part.x_A.size)
    return admissible_local_shift(x_hat_A, x_hat_B, dx_A, part, model)


def forge_local(x_hat_A, x_hat_B, dx_A, part: RegionPartition, model: IegsModel,
                epsilon: float = EPSILON) -> AttackVector:
    """Attack built from region knowledge only.

    ``x_hat_A``, ``x_hat_B`` and ``dx_A`` are aligned with ``part.x_A`` and
    ``part.x_B``.  Boundary and external states never move, so every ``z_N``
    entry of the result is exactly zero.
    """
    dx_A = np.asarray(dx_A, dtype=float)
    if dx_A.shape != part.x_A.shape:
        raise ValueError(f"dx_A has shape {dx_A.shape}, region has {part.x_A.size} free states")
    view = LocalView(model, part)
    n = model.n_state
    dx = _region_vector(part, n, dx_A)
    xl = view.local_state(_region_vector(part, n, x_hat_A, x_hat_B))
    dxl = dx[view.state_map]
    eq = view.model.equations
    dz = np.zeros(len(model.plan))
    dz[view.meter_map] = eq.h(xl + dxl) - eq.h(xl)
    drift = view.balance(xl + dxl) - view.balance(xl)
    d = float(np.linalg.norm(drift)) if drift.size else 0.0
    cert = {"balance_drift": d, "epsilon": epsilon, "stealthy": bool(d <= epsilon)}
    return AttackVector(dz, dx, "local", cert)


@dataclass
class LocalEstimate:
    x_A: np.ndarray
    x_B: np.ndarray
    result: EstimationResult
    revised_z: np.ndarray


def intruder_local_se(z_A, z_B, tie_readings, part: RegionPartition, model: IegsModel,
                      variances=None) -> LocalEstimate:
    """Region-only estimate from region meters and revised boundary injections.

    ``z_A`` and ``z_B`` follow ``part.z_A`` and ``part.z_B``; ``tie_readings``
    follows ``part.tie_meters``.  The region model sees only internal flows,
    so each boundary injection is reduced by the tie flows leaving that point.
    The coupling constraint is not imposed: a coupled injection may include
    tie flows the region model cannot express.  Without a PMU in the region,
    angles are relative to a local reference.
    """
    view = LocalView(model, part)
    full = np.zeros(len(model.plan))
    full[part.z_A] = np.asarray(z_A, dtype=float)
    full[part.z_B] = np.asarray(z_B, dtype=float)
    tie_readings = np.asarray(tie_readings, dtype=float)
    if tie_readings.shape != (len(part.tie_meters),):
        raise ValueError("tie readings must follow the partition's tie meters")
    idx = model.meter_index
    for (_, kind, elem, sign), val in zip(part.tie_meters, tie_readings):
        full[idx[(kind, elem)]] -= sign * val
    z = full[view.meter_map]
    if variances is not None:
        full_var = np.ones(len(model.plan))
        full_var[np.concatenate([part.z_A, part.z_B])] = np.asarray(variances, dtype=float)
        variances = full_var[view.meter_map]
    res = estimate_iegs(z, view.model, variances, mode="ose")
    x = np.zeros(model.n_state)
    x[view.state_map] = res.x
    return LocalEstimate(x[part.x_A], x[part.x_B], res, z)
