"""Ground-truth energy flow and noisy measurement generation.

The coupled flow is solved in two stages.  The power network is solved first
with a polar Newton iteration; generator outputs then fix the gas drawn by
gas-fired units (and the gas made by P2G units), after which the gas network
is solved with Newton on squared pressures.  The coupling only runs
power -> gas here, so no outer loop is needed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, ModelParseError, SolverError
from .netmodel import IegsModel, gas_only, power_only

log = logging.getLogger(__name__)

NOISE_PRESETS = {"none": 0.0, "low": 2e-3, "high": 1e-2}  # variances
MAX_ITER = 50
TOL = 1e-10


@dataclass(frozen=True)
class DispatchSpec:
    """Setpoints for one operating point.

    ``generators`` maps generator id to a dict with ``p`` and optionally
    ``q`` or ``v`` (voltage setpoint, making the bus PV).  The generator at
    the slack bus may omit ``p``.  ``compressors`` maps compressor id to
    either ``{"flow": c}`` or ``{"ratio": r}`` where r is pi_to / pi_from.
    Loads default to the model's values unless overridden here.
    """

    slack_bus: str
    slack_node: str
    slack_pi: float
    generators: dict = field(default_factory=dict)
    wells: dict = field(default_factory=dict)
    compressors: dict = field(default_factory=dict)
    p2g: dict = field(default_factory=dict)
    power_loads: dict = field(default_factory=dict)
    gas_loads: dict = field(default_factory=dict)
    slack_v: float = 1.0

    @classmethod
    def from_dict(cls, d: dict) -> "DispatchSpec":
        try:
            return cls(**d)
        except TypeError as exc:
            raise ModelParseError(f"dispatch: {exc}") from None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian measurement noise.

    Either a ``preset`` name (variance shared by every meter) or ``std``,
    which is a number, a per-kind dict or a per-meter list.
    """

    preset: str | None = None
    std: object = None
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        try:
            return cls(**d)
        except TypeError as exc:
            raise ModelParseError(f"noise: {exc}") from None

    def to_dict(self) -> dict:
        return {"preset": self.preset, "std": self.std, "seed": self.seed}

    def std_vector(self, model: IegsModel) -> np.ndarray:
        m = len(model.plan)
        if self.preset is not None:
            if self.preset not in NOISE_PRESETS:
                raise ModelParseError(f"unknown noise preset {self.preset!r}")
            return np.full(m, np.sqrt(NOISE_PRESETS[self.preset]))
        if self.std is None:
            return np.zeros(m)
        if isinstance(self.std, dict):
            return np.array([float(self.std.get(mt.kind, self.std.get("default", 0.0)))
                             for mt in model.plan])
        s = np.broadcast_to(np.asarray(self.std, dtype=float), (m,)).copy()
        if np.any(s < 0):
            raise ModelParseError("noise std must be nonnegative")
        return s


@dataclass
class MeasurementSet:
    z: np.ndarray
    variances: np.ndarray
    labels: list
    seed: int | None = None


@dataclass
class EnergyFlowSolution:
    x: np.ndarray
    generator_p: dict
    well_g: dict
    mismatch: float
    iterations: dict
    violations: list


# --------------------------------------------------------------------------
# power flow


def _power_flow(model: IegsModel, d: DispatchSpec):
    pw = model.power
    pm = power_only(model)
    eq = pm.equations
    nb = len(pw.buses)
    bi = pw.bus_index
    if d.slack_bus not in bi:
        raise ModelParseError(f"dispatch: unknown slack bus {d.slack_bus!r}")
    slack = bi[d.slack_bus]

    p_spec = np.zeros(nb)
    q_spec = np.zeros(nb)
    v_set = {slack: d.slack_v}
    loads = {l.id: (l.p, l.q) for l in pw.loads}
    for lid, val in d.power_loads.items():
        if lid not in loads:
            raise ModelParseError(f"dispatch: unknown power load {lid!r}")
        loads[lid] = (float(val["p"]), float(val.get("q", 0.0)))
    for l in pw.loads:
        p_spec[bi[l.bus]] -= loads[l.id][0]
        q_spec[bi[l.bus]] -= loads[l.id][1]
    p2g_p = {f.id: float(d.p2g.get(f.id, 0.0)) for f in model.p2g}
    for f in model.p2g:
        p_spec[bi[f.bus]] -= p2g_p[f.id]
    gens = {g.id: g for g in pw.generators}
    for gid in d.generators:
        if gid not in gens:
            raise ModelParseError(f"dispatch: unknown generator {gid!r}")
    for g in pw.generators:
        sp = d.generators.get(g.id, {})
        k = bi[g.bus]
        p_spec[k] += float(sp.get("p", 0.0))
        q_spec[k] += float(sp.get("q", 0.0))
        if sp.get("v") is not None and k != slack:
            v_set[k] = float(sp["v"])
        if k == slack and sp.get("v") is not None:
            v_set[k] = float(sp["v"])

    pv = np.array(sorted(v_set), dtype=int)
    ang = np.array([k for k in range(nb) if k != slack], dtype=int)
    pq = np.array([k for k in range(nb) if k not in v_set], dtype=int)

    x = np.concatenate([np.ones(nb), np.zeros(nb)])
    x[pv] = [v_set[k] for k in pv]
    o = eq.offsets

    def mismatch(xx):
        cat = eq.catalog(xx)
        p = cat[o["p_inj"]:o["p_inj"] + nb]
        q = cat[o["q_inj"]:o["q_inj"] + nb]
        return np.concatenate([(p - p_spec)[ang], (q - q_spec)[pq]])

    F = mismatch(x)
    it = 0
    while np.max(np.abs(F), initial=0.0) > TOL:
        if it >= MAX_ITER:
            raise ConvergenceError(f"power flow did not converge (mismatch {np.max(np.abs(F)):.3e})")
        it += 1
        J = eq.catalog_jacobian(x)
        Jp = J[o["p_inj"] + ang][:, np.concatenate([nb + ang, pq])]
        Jq = J[o["q_inj"] + pq][:, np.concatenate([nb + ang, pq])]
        try:
            dx = np.linalg.solve(np.vstack([Jp, Jq]), -F)
        except np.linalg.LinAlgError:
            raise SolverError("power flow Jacobian singular") from None
        step = np.zeros(2 * nb)
        step[nb + ang] = dx[:len(ang)]
        step[pq] = dx[len(ang):]
        t = 1.0
        nF = np.linalg.norm(F)
        for _ in range(30):
            Ft = mismatch(x + t * step)
            if np.linalg.norm(Ft) < nF:
                break
            t *= 0.5
        x = x + t * step
        F = Ft
    cat = eq.catalog(x)
    p_inj = cat[o["p_inj"]:o["p_inj"] + nb]

    # slack generation: whatever the slack bus injects beyond its fixed devices
    gen_p = {}
    slack_free = [g for g in pw.generators if bi[g.bus] == slack and "p" not in d.generators.get(g.id, {})]
    for g in pw.generators:
        sp = d.generators.get(g.id, {})
        if "p" in sp:
            gen_p[g.id] = float(sp["p"])
    if slack_free:
        # p_spec at the slack bus already holds the fixed devices there
        share = (p_inj[slack] - p_spec[slack]) / len(slack_free)
        for g in slack_free:
            gen_p[g.id] = float(share)
    elif abs(p_inj[slack] - p_spec[slack]) > 1e-8:
        raise ModelParseError("dispatch: slack bus has no generator to absorb the mismatch")
    return x, gen_p, p2g_p, it, p_spec, q_spec, ang, pq


# --------------------------------------------------------------------------
# gas flow


def _gas_flow(model: IegsModel, d: DispatchSpec, gen_p: dict, p2g_p: dict):
    gs = model.gas
    gm = gas_only(model)
    eq = gm.equations
    ni = gs.node_index
    nn, nc = len(gs.nodes), len(gs.compressors)
    if d.slack_node not in ni:
        raise ModelParseError(f"dispatch: unknown slack node {d.slack_node!r}")
    slack = ni[d.slack_node]

    g_spec = np.zeros(nn)
    loads = {l.id: l.g for l in gs.loads}
    for lid, val in d.gas_loads.items():
        if lid not in loads:
            raise ModelParseError(f"dispatch: unknown gas load {lid!r}")
        loads[lid] = float(val)
    for l in gs.loads:
        g_spec[ni[l.node]] -= loads[l.id]
    well_g = {}
    for w in gs.wells:
        if w.id in d.wells:
            well_g[w.id] = float(d.wells[w.id])
            g_spec[ni[w.node]] += well_g[w.id]
        elif ni[w.node] != slack:
            well_g[w.id] = 0.0
    for g in model.power.generators:
        if g.kind == "gas":
            g_spec[ni[g.gas_node]] -= g.gamma * gen_p.get(g.id, 0.0)
    for f in model.p2g:
        g_spec[ni[f.node]] += f.chi * p2g_p[f.id]

    ratio_k, ratio_r, flow_c = [], [], np.zeros(nc)
    for k, c in enumerate(gs.compressors):
        ctl = d.compressors.get(c.id)
        if ctl is None:
            raise ModelParseError(f"dispatch: compressor {c.id!r} needs a flow or ratio setpoint")
        if "ratio" in ctl:
            ratio_k.append(k)
            ratio_r.append(float(ctl["ratio"]))
        else:
            flow_c[k] = float(ctl["flow"])
    ratio_k = np.array(ratio_k, dtype=int)
    ratio_r2 = np.array(ratio_r) ** 2
    cf = np.array([ni[c.from_node] for c in gs.compressors], dtype=int)
    ct = np.array([ni[c.to_node] for c in gs.compressors], dtype=int)
    free_nodes = np.array([k for k in range(nn) if k != slack], dtype=int)
    ns = len(free_nodes)
    s0 = d.slack_pi ** 2
    Bp, Bc = eq.B_pipe, eq.B_comp

    def unpack(u):
        s = np.full(nn, s0)
        s[free_nodes] = u[:ns]
        c = flow_c.copy()
        c[ratio_k] = u[ns:]
        return s, c

    def residual(u, flow, dflow):
        s, c = unpack(u)
        ds = s[eq.pf] - s[eq.pt]
        f = flow(ds)
        r_bal = (Bp @ f + Bc @ c - g_spec)[free_nodes]
        r_rat = s[ct[ratio_k]] - ratio_r2 * s[cf[ratio_k]]
        # Jacobian
        Df = dflow(ds)
        Js = np.zeros((nn, nn))
        for k in range(eq.npipe):
            Js[:, eq.pf[k]] += Bp[:, k] * Df[k]
            Js[:, eq.pt[k]] -= Bp[:, k] * Df[k]
        Jbal = np.hstack([Js[np.ix_(free_nodes, free_nodes)], Bc[np.ix_(free_nodes, ratio_k)]])
        Jrat = np.zeros((len(ratio_k), ns + len(ratio_k)))
        pos = {n: i for i, n in enumerate(free_nodes)}
        for i, k in enumerate(ratio_k):
            if ct[k] in pos:
                Jrat[i, pos[ct[k]]] += 1.0
            if cf[k] in pos:
                Jrat[i, pos[cf[k]]] -= ratio_r2[i]
        return np.concatenate([r_bal, r_rat]), np.vstack([Jbal, Jrat])

    # linear start: conductance model f = W * ds is linear in (s, c)
    u = np.zeros(ns + len(ratio_k))
    lin = lambda ds: eq.W * ds  # noqa: E731
    dlin = lambda ds: eq.W  # noqa: E731
    r, J = residual(u, lin, dlin)
    try:
        u = u - np.linalg.solve(J, r)
    except np.linalg.LinAlgError:
        raise SolverError("gas network Jacobian singular") from None
    s, c = unpack(u)
    f_lin = eq.W * (s[eq.pf] - s[eq.pt])
    # fit squared pressures to those flows under the Weymouth law
    rows, rhs = [], []
    for k in range(eq.npipe):
        row = np.zeros(nn)
        row[eq.pf[k]], row[eq.pt[k]] = 1.0, -1.0
        rows.append(row)
        rhs.append(f_lin[k] * abs(f_lin[k]) / eq.W[k])
    for i, k in enumerate(ratio_k):
        row = np.zeros(nn)
        row[ct[k]], row[cf[k]] = 1.0, -ratio_r2[i]
        rows.append(row)
        rhs.append(0.0)
    row = np.zeros(nn)
    row[slack] = 1.0
    rows.append(row)
    rhs.append(s0)
    s_fit = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)[0]
    u = np.concatenate([s_fit[free_nodes], c[ratio_k]])

    def wey(ds):
        return np.sign(ds) * np.sqrt(eq.W * np.abs(ds))

    def dwey(ds):
        return eq.W / (2.0 * np.sqrt(eq.W * np.abs(ds) + 1e-12))

    F, J = residual(u, wey, dwey)
    it = 0
    while np.max(np.abs(F), initial=0.0) > TOL:
        if it >= MAX_ITER:
            raise ConvergenceError(f"gas flow did not converge (mismatch {np.max(np.abs(F)):.3e})")
        it += 1
        try:
            du = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            raise SolverError("gas network Jacobian singular") from None
        t = 1.0
        nF = np.linalg.norm(F)
        for _ in range(30):
            Ft, Jt = residual(u + t * du, wey, dwey)
            if np.linalg.norm(Ft) < nF:
                break
            t *= 0.5
        u = u + t * du
        F, J = Ft, Jt
    s, c = unpack(u)
    if np.any(s <= 0):
        raise SolverError("gas flow produced nonpositive squared pressure")
    ds = s[eq.pf] - s[eq.pt]
    bad = np.flatnonzero(ds < -1e-12 * s0)
    if bad.size:
        raise SolverError(f"pipeline {gs.pipelines[bad[0]].id}: flow opposes declared orientation")
    pi = np.sqrt(s)
    g_inj = Bp @ np.sqrt(eq.W * np.maximum(ds, 0.0)) + Bc @ c
    slack_wells = [w for w in gs.wells if ni[w.node] == slack and w.id not in d.wells]
    if slack_wells:
        excess = g_inj[slack] - g_spec[slack]
        for w in slack_wells:
            well_g[w.id] = float(excess / len(slack_wells))
    elif abs(g_inj[slack] - g_spec[slack]) > 1e-8:
        raise ModelParseError("dispatch: slack node has no well to absorb the mismatch")
    return c, pi, well_g, it, g_spec


def solve_energy_flow(model: IegsModel, dispatch: DispatchSpec) -> EnergyFlowSolution:
    """Balanced coupled operating point for ``dispatch``.

    Bound violations at the solution are listed in ``violations``; the state
    is returned regardless.
    """
    xp, gen_p, p2g_p, itp, p_spec, q_spec, ang, pq = _power_flow(model, dispatch)
    nb = model.n_buses
    if model.n_nodes:
        c, pi, well_g, itg, g_spec = _gas_flow(model, dispatch, gen_p, p2g_p)
    else:
        c, pi, well_g, itg, g_spec = np.zeros(0), np.zeros(0), {}, 0, np.zeros(0)
    x = np.concatenate([xp[:nb], xp[nb:], c, pi])

    eq = model.equations
    cat = eq.catalog(x)
    o = eq.offsets
    p = cat[o["p_inj"]:o["p_inj"] + nb]
    q = cat[o["q_inj"]:o["q_inj"] + nb]
    g = cat[o["g_inj"]:o["g_inj"] + model.n_nodes]
    mism = [np.abs(p - p_spec)[ang], np.abs(q - q_spec)[pq], np.abs(eq.coupling_residual(x))]
    if model.n_nodes:
        slack = model.gas.node_index[dispatch.slack_node]
        mism.append(np.abs(np.delete(g - g_spec, slack)))
    mismatch = float(max((np.max(m) for m in mism if m.size), default=0.0))
    viol = _violations(model, x, cat, gen_p, well_g)
    for v in viol:
        log.info("energy flow bound violation: %s", v)
    return EnergyFlowSolution(x, gen_p, well_g, mismatch, {"power": itp, "gas": itg}, viol)


def _violations(model, x, cat, gen_p, well_g) -> list[str]:
    out = []
    eq = model.equations
    o = eq.offsets
    pw, gs = model.power, model.gas
    nb, nn = model.n_buses, model.n_nodes
    v, th = x[:nb], x[nb:2 * nb]
    c, pi = x[eq.ic:eq.ipi], x[eq.ipi:]
    p = cat[o["p_inj"]:o["p_inj"] + nb]
    q = cat[o["q_inj"]:o["q_inj"] + nb]
    tol = 1e-9
    for k, b in enumerate(pw.buses):
        if not b.v_min - tol <= v[k] <= b.v_max + tol:
            out.append(f"bus {b.id}: voltage {v[k]:.6g} outside [{b.v_min}, {b.v_max}]")
        if abs(th[k]) > b.theta_max + tol:
            out.append(f"bus {b.id}: angle {th[k]:.6g} exceeds {b.theta_max}")
        if not b.p_min - tol <= p[k] <= b.p_max + tol:
            out.append(f"bus {b.id}: real injection {p[k]:.6g} out of range")
        if not b.q_min - tol <= q[k] <= b.q_max + tol:
            out.append(f"bus {b.id}: reactive injection {q[k]:.6g} out of range")
    pf = cat[o["p_flow_fwd"]:o["p_flow_fwd"] + eq.nl]
    qf = cat[o["q_flow_fwd"]:o["q_flow_fwd"] + eq.nl]
    pr = cat[o["p_flow_rev"]:o["p_flow_rev"] + eq.nl]
    qr = cat[o["q_flow_rev"]:o["q_flow_rev"] + eq.nl]
    for k, l in enumerate(pw.lines):
        s = max(np.hypot(pf[k], qf[k]), np.hypot(pr[k], qr[k]))
        if s > l.s_max + tol:
            out.append(f"line {l.id}: apparent flow {s:.6g} exceeds {l.s_max}")
    for g in pw.generators:
        pg = gen_p.get(g.id, 0.0)
        if not g.p_min - tol <= pg <= g.p_max + tol:
            out.append(f"generator {g.id}: output {pg:.6g} outside [{g.p_min}, {g.p_max}]")
    gi = cat[o["g_inj"]:o["g_inj"] + nn]
    for k, n in enumerate(gs.nodes):
        if not n.pi_min - tol <= pi[k] <= n.pi_max + tol:
            out.append(f"node {n.id}: pressure {pi[k]:.6g} outside [{n.pi_min}, {n.pi_max}]")
        if not n.g_min - tol <= gi[k] <= n.g_max + tol:
            out.append(f"node {n.id}: injection {gi[k]:.6g} out of range")
    gp = cat[o["g_flow_pipe"]:o["g_flow_pipe"] + eq.npipe]
    for k, pl in enumerate(gs.pipelines):
        if gp[k] > pl.g_max + tol:
            out.append(f"pipeline {pl.id}: flow {gp[k]:.6g} exceeds {pl.g_max}")
    ni = gs.node_index
    for k, cp in enumerate(gs.compressors):
        if not -tol <= c[k] <= cp.c_max + tol:
            out.append(f"compressor {cp.id}: flow {c[k]:.6g} outside [0, {cp.c_max}]")
        if pi[ni[cp.to_node]] > cp.ratio * pi[ni[cp.from_node]] + tol:
            out.append(f"compressor {cp.id}: pressure ratio exceeds {cp.ratio}")
    for w in gs.wells:
        gw = well_g.get(w.id, 0.0)
        if not -tol <= gw <= w.g_max + tol:
            out.append(f"well {w.id}: output {gw:.6g} outside [0, {w.g_max}]")
    return out


# --------------------------------------------------------------------------
# measurements


def sample_measurements(x, model: IegsModel, noise: NoiseModel) -> MeasurementSet:
    """z = h(x) + e with e drawn in plan order from ``default_rng(seed)``.

    The recorded variance of each entry is the noise variance when positive
    and the plan's nominal std squared otherwise, so noiseless sets still
    carry usable estimator weights.
    """
    h = model.equations.h(np.asarray(x, dtype=float))
    std = noise.std_vector(model)
    rng = np.random.default_rng(noise.seed)
    e = rng.standard_normal(h.size) * std
    nominal = np.array([m.std for m in model.plan]) ** 2
    var = np.where(std > 0, std ** 2, nominal)
    return MeasurementSet(h + e, var, model.meter_labels(), noise.seed)
