"""Attacks that need nothing but the gas network's topology.

Two patterns survive without any pipeline or compressor parameter:

* load redistribution: a compressor joining two loaded nodes carries ``Δ``
  more gas, so one load looks ``Δ`` smaller and the other ``Δ`` larger;
* flow redistribution: ``Δ`` circulates around a cycle of compressors and
  no nodal injection changes.

Power-side attacks have no such pattern; ``demonstrate_lemma1`` shows it
empirically, together with the one exception (a uniform shift of every
phase angle reading).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .attack_full import AttackVector, StealthReport, verify_stealth
from .errors import InfeasibleAttackError
from .estimator import estimate_iegs
from .netmodel import IegsModel

LOAD = "load_redistribution"
FLOW = "flow_redistribution"


class CompressorGraph:
    """Region gas nodes joined by compressors only; pipelines are dropped."""

    def __init__(self, model: IegsModel, nodes=None):
        gs = model.gas
        keep = set(n.id for n in gs.nodes) if nodes is None else set(map(str, nodes))
        self.nodes = tuple(n.id for n in gs.nodes if n.id in keep)
        self.edges = tuple((c.id, c.from_node, c.to_node) for c in gs.compressors
                           if c.from_node in keep and c.to_node in keep)
        adj: dict[str, list] = {n: [] for n in self.nodes}
        for k, (_, a, b) in enumerate(self.edges):
            adj[a].append((k, b))
            adj[b].append((k, a))
        self._adj = adj

        comp = {}
        parent: dict[str, tuple | None] = {}
        depth = {}
        tree = set()
        for root in self.nodes:
            if root in comp:
                continue
            comp[root], parent[root], depth[root] = len(set(comp.values())), None, 0
            q = deque([root])
            while q:
                u = q.popleft()
                for k, w in adj[u]:
                    if w not in comp:
                        comp[w], parent[w], depth[w] = comp[root], (k, u), depth[u] + 1
                        tree.add(k)
                        q.append(w)
        self.component = comp
        self.cycles = tuple(self._cycle(k, parent, depth) for k in range(len(self.edges)) if k not in tree)

    def _cycle(self, k, parent, depth):
        """Fundamental cycle closed by non-tree edge ``k`` as (edge index, sign) pairs.

        Signs follow the traversal a -> b of edge ``k`` and back to a through
        the tree; +1 means the compressor is traversed along its direction.
        """
        _, a, b = self.edges[k]
        up_b, up_a = [], []
        u, v = b, a
        while u != v:
            if depth[u] >= depth[v]:
                e, p = parent[u]
                up_b.append((e, u, p))
                u = p
            else:
                e, p = parent[v]
                up_a.append((e, v, p))
                v = p
        walk = [(k, a, b)] + up_b + list(reversed([(e, p, c) for e, c, p in up_a]))
        out = []
        for e, frm, _ in walk:
            out.append((e, 1 if self.edges[e][1] == frm else -1))
        # normalise so the first compressor in model order carries +1
        out.sort()
        if out[0][1] < 0:
            out = [(e, -s) for e, s in out]
        return tuple(out)


@dataclass(frozen=True)
class TopoAttackCandidate:
    kind: str
    meters: tuple  # (kind, element) pairs
    pattern: tuple  # +1/-1 per meter
    compressors: tuple  # (compressor id, sign)
    admissible: tuple | None = None  # (lo, hi) on Δ once measurements are known

    @property
    def max_magnitude(self) -> float | None:
        if self.admissible is None:
            return None
        return float(min(-self.admissible[0], self.admissible[1]))

    def to_dict(self) -> dict:
        return {"kind": self.kind,
                "meters": [f"{k}:{e}" for k, e in self.meters],
                "pattern": list(self.pattern),
                "compressors": [{"id": c, "sign": s} for c, s in self.compressors],
                "admissible": None if self.admissible is None else list(self.admissible)}


def _loaded_nodes(model: IegsModel) -> set:
    return {d.node for d in model.gas.loads}


def enumerate_candidates(model: IegsModel, nodes=None, z=None) -> list[TopoAttackCandidate]:
    """All topology-only gas attacks inside a region.

    Reads element ids and connectivity only; with ``z`` the admissible range
    of each candidate is filled in from the measured values.
    """
    g = CompressorGraph(model, nodes)
    loaded = _loaded_nodes(model)
    have = model.meter_index
    out = []
    for cid, a, b in g.edges:
        if a in loaded and b in loaded and ("g_inj", a) in have and ("g_inj", b) in have:
            meters = [("g_inj", a), ("g_inj", b)]
            pattern = [1, -1]
            if ("g_flow_comp", cid) in have:
                meters.append(("g_flow_comp", cid))
                pattern.append(1)
            out.append(TopoAttackCandidate(LOAD, tuple(meters), tuple(pattern), ((cid, 1),)))
    for cyc in g.cycles:
        comps = tuple((g.edges[e][0], s) for e, s in cyc)
        meters = tuple(("g_flow_comp", c) for c, _ in comps if ("g_flow_comp", c) in have)
        pattern = tuple(s for c, s in comps if ("g_flow_comp", c) in have)
        out.append(TopoAttackCandidate(FLOW, meters, pattern, comps))
    if z is not None:
        out = [with_range(c, model, z) for c in out]
    return out


def admissible_range(cand: TopoAttackCandidate, model: IegsModel, z) -> tuple[float, float]:
    """Interval of Δ that keeps loads and compressor flows sign-plausible.

    Loads stay loads (``|Δ|`` within both measured injections) and no
    falsified compressor flow turns negative.  Unmetered compressor flows
    impose no bound.
    """
    z = np.asarray(z, dtype=float)
    idx = model.meter_index
    lo, hi = -np.inf, np.inf
    if cand.kind == LOAD:
        lim = min(abs(z[idx[cand.meters[0]]]), abs(z[idx[cand.meters[1]]]))
        lo, hi = -lim, lim
    for cid, s in cand.compressors:
        k = idx.get(("g_flow_comp", cid))
        if k is None:
            continue
        c = z[k]
        if s > 0:
            lo = max(lo, -c)
        else:
            hi = min(hi, c)
    return float(lo), float(hi)


def with_range(cand: TopoAttackCandidate, model: IegsModel, z) -> TopoAttackCandidate:
    return TopoAttackCandidate(cand.kind, cand.meters, cand.pattern, cand.compressors,
                               admissible_range(cand, model, z))


def forge_topo(cand: TopoAttackCandidate, delta: float, z, model: IegsModel) -> AttackVector:
    """Scale a candidate's pattern by ``delta``; only compressor flow states move."""
    lo, hi = admissible_range(cand, model, z)
    if not lo - 1e-12 <= delta <= hi + 1e-12:
        raise InfeasibleAttackError(f"magnitude {delta:g} outside admissible range [{lo:g}, {hi:g}]",
                                    active=[cand.kind])
    dz = np.zeros(len(model.plan))
    idx = model.meter_index
    for m, s in zip(cand.meters, cand.pattern):
        dz[idx[m]] += s * delta
    dx = np.zeros(model.n_state)
    for cid, s in cand.compressors:
        dx[model.state_index("c", cid)] += s * delta
    bc = model.equations.B_comp
    cert = {"kind": cand.kind, "delta": float(delta)}
    if cand.kind == FLOW:
        # exact integer check of the circulation pattern
        pattern = np.zeros(bc.shape[1], dtype=int)
        for cid, s in cand.compressors:
            pattern[model.gas.compressor_index[cid]] += s
        cert["null_space"] = bool(not np.any(bc.astype(int) @ pattern))
    return AttackVector(dz, dx, "topology", cert)


@dataclass
class PowerSideReport:
    theta_shift: float
    all_pmus_inside: StealthReport
    pmu_outside: StealthReport | None
    trials: list  # (line id, delta, r_before, r_after)

    @property
    def all_increase(self) -> bool:
        return all(after > before for _, _, before, after in self.trials)

    def to_dict(self) -> dict:
        return {
            "theta_shift": self.theta_shift,
            "all_pmus_inside": {"r_before": self.all_pmus_inside.r_before,
                                "r_after": self.all_pmus_inside.r_after},
            "pmu_outside": None if self.pmu_outside is None else {
                "r_before": self.pmu_outside.r_before, "r_after": self.pmu_outside.r_after},
            "trials": [{"line": l, "delta": d, "r_before": a, "r_after": b}
                       for l, d, a, b in self.trials],
            "all_increase": self.all_increase,
        }


def _theta_attack(model, shift, buses) -> AttackVector:
    dz = np.zeros(len(model.plan))
    for k, m in enumerate(model.plan):
        if m.kind == "theta_pmu" and m.element in buses:
            dz[k] = shift
    dx = np.zeros(model.n_state)
    nb = model.n_buses
    dx[nb:2 * nb] = shift
    return AttackVector(dz, dx, "topology", {"kind": "uniform_theta", "delta": shift})


def demonstrate_lemma1(model: IegsModel, z, variances=None, theta_shift: float = 0.2,
                       outside_bus: str | None = None, n_trials: int = 100,
                       seed: int = 0, magnitude=(0.05, 0.5)) -> PowerSideReport:
    """Empirical check that power-side topology-only injections are caught.

    Each trial falsifies one line's active power flow at both ends together
    with the two end injections, as a lossless flow shift would.  The
    uniform angle shift is run once with every PMU inside the region and,
    when ``outside_bus`` names a PMU bus, once with that PMU left alone.
    """
    z = np.asarray(z, dtype=float)
    base = estimate_iegs(z, model, variances)
    pmus = {m.element for m in model.plan if m.kind == "theta_pmu"}
    inside = _theta_attack(model, theta_shift, pmus)
    rep_in = verify_stealth(z, inside, model, variances=variances)
    rep_out = None
    if outside_bus is not None:
        if outside_bus not in pmus:
            raise ValueError(f"bus {outside_bus} carries no PMU reading")
        part = _theta_attack(model, theta_shift, pmus - {outside_bus})
        rep_out = verify_stealth(z, part, model, variances=variances)

    rng = np.random.default_rng(seed)
    idx = model.meter_index
    lines = [l for l in model.power.lines
             if all(k in idx for k in (("p_flow_fwd", l.id), ("p_flow_rev", l.id),
                                       ("p_inj", l.from_bus), ("p_inj", l.to_bus)))]
    trials = []
    if lines:
        for _ in range(n_trials):
            l = lines[rng.integers(len(lines))]
            d = float(rng.uniform(*magnitude) * rng.choice([-1.0, 1.0]))
            dz = np.zeros(len(model.plan))
            dz[idx[("p_flow_fwd", l.id)]] += d
            dz[idx[("p_flow_rev", l.id)]] -= d
            dz[idx[("p_inj", l.from_bus)]] += d
            dz[idx[("p_inj", l.to_bus)]] -= d
            after = estimate_iegs(z + dz, model, variances, x0=base.x)
            trials.append((l.id, d, base.r_norm, after.r_norm))
    return PowerSideReport(theta_shift, rep_in, rep_out, trials)
