"""Attacks built with full knowledge of the model and of the operator's estimate.

An attack is a hypothetical state shift dx: the forged measurement
change is ``h(x_hat + dx) - h(x_hat)``.  Such a change passes residual tests
by construction; it passes the coupling test only when the shifted state
still balances every coupled unit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, InfeasibleAttackError, SolverError
from .estimator import EPSILON, DetectionVerdict, detect_bad_data, estimate_iegs, free_mask
from .netmodel import INF, IegsModel
from .solver import gauss_newton


@dataclass
class AttackVector:
    dz: np.ndarray
    dx: np.ndarray | None
    provenance: str  # complete | local | topology | naive
    certificate: dict = field(default_factory=dict)

    def support(self, tol: float = 0.0) -> np.ndarray:
        return np.flatnonzero(np.abs(self.dz) > tol)

    def to_dict(self, model: IegsModel) -> dict:
        labels = model.meter_labels()
        states = model.state_labels()
        out = {
            "provenance": self.provenance,
            "dz": {labels[k]: float(self.dz[k]) for k in self.support()},
            "certificate": self.certificate,
        }
        if self.dx is not None:
            out["dx"] = {states[k]: float(self.dx[k]) for k in np.flatnonzero(self.dx)}
        return out


@dataclass
class TargetSpec:
    """Falsification goals.

    ``targets`` is a list of dicts with ``id`` (``"kind:element"``, either a
    meter such as ``"p_inj:1"`` or a state such as ``"v:2"``) and either
    ``value`` or ``offset``.  States listed in ``frozen`` are left unshifted.
    """

    targets: list
    enforce_limits: bool = True
    frozen: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict) -> "TargetSpec":
        return cls(list(d.get("targets", [])), bool(d.get("enforce_limits", True)),
                   list(d.get("frozen", [])))


@dataclass
class StealthReport:
    before: DetectionVerdict
    after: DetectionVerdict
    r_before: float
    r_after: float
    x_before: np.ndarray
    x_after: np.ndarray

    @property
    def residual_change(self) -> float:
        return self.r_after - self.r_before


@dataclass
class BiasReport:
    xi: np.ndarray
    exact: float
    bound: float
    spectral_norm: float
    bias_off_coupling: bool
    shift_off_coupling: bool
    rc_bad: float
    rc_designed: float


# --------------------------------------------------------------------------
# forging


def forge_from_shift(x_hat, dx, model: IegsModel, epsilon: float = EPSILON,
                     provenance: str = "complete") -> AttackVector:
    """Measurement change that moves the estimate from ``x_hat`` to ``x_hat + dx``."""
    eq = model.equations
    x_hat = np.asarray(x_hat, dtype=float)
    dx = np.asarray(dx, dtype=float)
    h0 = eq.h(x_hat)
    dz = eq.h(x_hat + dx) - h0
    rc = eq.coupling_residual(x_hat + dx)
    rc_norm = float(np.linalg.norm(rc))
    cert = {
        "residual_change": 0.0,
        "rc_before": float(np.linalg.norm(eq.coupling_residual(x_hat))),
        "rc_after": rc_norm,
        "epsilon": epsilon,
        "stealthy": bool(rc_norm <= epsilon),
    }
    return AttackVector(dz, dx, provenance, cert)


def naive_power_attack(x_hat, dx_p, model: IegsModel, epsilon: float = EPSILON) -> AttackVector:
    """Classic power-only attack that ignores the gas side.

    ``dx_p`` covers the power states ``(v, theta)`` or the full state (its gas
    part is then ignored).  Gas meters are left untouched.
    """
    eq = model.equations
    nb = model.n_buses
    x_hat = np.asarray(x_hat, dtype=float)
    dx = np.zeros(model.n_state)
    dx[:2 * nb] = np.asarray(dx_p, dtype=float)[:2 * nb]
    dz = eq.h(x_hat + dx) - eq.h(x_hat)
    dz[~eq.is_power_meter] = 0.0
    rc = float(np.linalg.norm(eq.coupling_residual(x_hat + dx)))
    cert = {"rc_after": rc, "epsilon": epsilon, "stealthy": bool(rc <= epsilon)}
    return AttackVector(dz, dx, "naive", cert)


def project_to_coupling(x_hat, dx, model: IegsModel, free=None, tol: float = 1e-11,
                        max_iter: int = 30) -> np.ndarray:
    """Smallest correction making ``x_hat + dx`` satisfy every coupling row."""
    eq = model.equations
    if eq.cp_bus.size == 0:
        return np.asarray(dx, dtype=float).copy()
    free = free_mask(model) if free is None else np.asarray(free, dtype=bool)
    dx = np.asarray(dx, dtype=float).copy()
    for _ in range(max_iter):
        c = eq.coupling_residual(x_hat + dx)
        if np.max(np.abs(c)) < tol:
            return dx
        A = eq.coupling_jacobian(x_hat + dx)[:, free]
        dx[free] -= np.linalg.lstsq(A, c, rcond=None)[0]
    raise ConvergenceError("coupling projection did not converge")


def random_compliant_shift(x_hat, model: IegsModel, rng: np.random.Generator,
                           scale: float = 1e-3, free=None) -> np.ndarray:
    """Random shift over the free states that keeps every coupled unit balanced."""
    free = free_mask(model) if free is None else np.asarray(free, dtype=bool)
    dx = np.zeros(model.n_state)
    dx[free] = scale * rng.standard_normal(int(free.sum()))
    return project_to_coupling(x_hat, dx, model, free)


# --------------------------------------------------------------------------
# verification


def verify_stealth(z, attack: AttackVector, model: IegsModel, tau: float | None = None,
                   epsilon: float = EPSILON, variances=None, mode: str = "pse") -> StealthReport:
    """Estimate on ``z`` and on ``z + dz`` and run the detector on both."""
    z = np.asarray(z, dtype=float)
    before = estimate_iegs(z, model, variances, mode=mode)
    vb = detect_bad_data(z, before, tau, epsilon)
    if not np.any(attack.dz):
        return StealthReport(vb, vb, before.r_norm, before.r_norm, before.x, before.x)
    x0 = None
    if attack.dx is not None:
        x0 = before.x + attack.dx
    za = z + attack.dz
    try:
        after = estimate_iegs(za, model, variances, mode=mode, x0=x0)
    except (SolverError, ValueError):
        after = estimate_iegs(za, model, variances, mode=mode)
    va = detect_bad_data(za, after, tau, epsilon)
    return StealthReport(vb, va, before.r_norm, after.r_norm, before.x, after.x)


# --------------------------------------------------------------------------
# targeted synthesis


def _parse_id(model: IegsModel, ident: str):
    kind, _, element = ident.partition(":")
    if kind in ("v", "theta", "c", "pi"):
        return "state", model.state_index(kind, element)
    if (kind, element) in model.meter_index:
        return "meter", model.meter_index[(kind, element)]
    raise KeyError(f"unknown target id {ident!r}")


class _Limits:
    """Operating limits on estimated measurements and states, as one vector function."""

    def __init__(self, model: IegsModel):
        self.model = model
        eq = model.equations
        o = eq.offsets
        pw, gs = model.power, model.gas
        rows, lo, hi, names = [], [], [], []
        for k, b in enumerate(pw.buses):
            rows.append(("cat", o["v_mag"] + k)); lo.append(b.v_min); hi.append(b.v_max); names.append(f"v:{b.id}")
            rows.append(("cat", o["theta_pmu"] + k)); lo.append(-b.theta_max); hi.append(b.theta_max)
            names.append(f"theta:{b.id}")
            rows.append(("cat", o["p_inj"] + k)); lo.append(b.p_min); hi.append(b.p_max); names.append(f"p_inj:{b.id}")
            rows.append(("cat", o["q_inj"] + k)); lo.append(b.q_min); hi.append(b.q_max); names.append(f"q_inj:{b.id}")
        for k, l in enumerate(pw.lines):
            for end in ("fwd", "rev"):
                rows.append(("s2", k, end)); lo.append(-INF); hi.append(l.s_max ** 2)
                names.append(f"s_{end}:{l.id}")
        for k, p in enumerate(gs.pipelines):
            rows.append(("cat", o["g_flow_pipe"] + k)); lo.append(-p.g_max); hi.append(p.g_max)
            names.append(f"g_flow_pipe:{p.id}")
        ni = gs.node_index
        for k, c in enumerate(gs.compressors):
            rows.append(("cat", o["g_flow_comp"] + k)); lo.append(0.0); hi.append(c.c_max)
            names.append(f"c:{c.id}")
            rows.append(("ratio", ni[c.from_node], ni[c.to_node], c.ratio)); lo.append(-INF); hi.append(0.0)
            names.append(f"ratio:{c.id}")
        for k, n in enumerate(gs.nodes):
            rows.append(("cat", o["pi"] + k)); lo.append(n.pi_min); hi.append(n.pi_max); names.append(f"pi:{n.id}")
            rows.append(("cat", o["g_inj"] + k)); lo.append(n.g_min); hi.append(n.g_max); names.append(f"g_inj:{n.id}")
        self.rows = rows
        self.lo = np.array(lo, dtype=float)
        self.hi = np.array(hi, dtype=float)
        self.names = names

    def values(self, x):
        eq = self.model.equations
        cat = eq.catalog(x)
        o = eq.offsets
        out = np.empty(len(self.rows))
        for i, r in enumerate(self.rows):
            if r[0] == "cat":
                out[i] = cat[r[1]]
            elif r[0] == "s2":
                p = cat[o[f"p_flow_{r[2]}"] + r[1]]
                q = cat[o[f"q_flow_{r[2]}"] + r[1]]
                out[i] = p * p + q * q
            else:
                pi = x[eq.ipi:]
                out[i] = pi[r[2]] - r[3] * pi[r[1]]
        return out

    def jacobian(self, x, idx):
        eq = self.model.equations
        cat = eq.catalog(x)
        Jc = eq.catalog_jacobian(x)
        o = eq.offsets
        out = np.zeros((len(idx), eq.nx))
        for n, i in enumerate(idx):
            r = self.rows[i]
            if r[0] == "cat":
                out[n] = Jc[r[1]]
            elif r[0] == "s2":
                ip, iq = o[f"p_flow_{r[2]}"] + r[1], o[f"q_flow_{r[2]}"] + r[1]
                out[n] = 2 * cat[ip] * Jc[ip] + 2 * cat[iq] * Jc[iq]
            else:
                out[n, eq.ipi + r[2]] = 1.0
                out[n, eq.ipi + r[1]] = -r[3]
        return out


def synth_targeted(x_hat, target: TargetSpec, model: IegsModel, epsilon: float = EPSILON,
                   max_rounds: int = 25) -> AttackVector:
    """Smallest state shift meeting the targets while keeping coupled units balanced.

    With ``enforce_limits`` the falsified estimates must also respect every
    operating limit; violated limits are pinned to their bound and the
    problem re-solved until none remain.
    """
    eq = model.equations
    x_hat = np.asarray(x_hat, dtype=float)
    free = free_mask(model).copy()
    for ident in target.frozen:
        kind, idx = _parse_id(model, ident)
        if kind != "state":
            raise KeyError(f"frozen id {ident!r} is not a state")
        free[idx] = False

    tgt_kind, tgt_idx, tgt_val = [], [], []
    seen = {}
    h0 = eq.h(x_hat)
    for t in target.targets:
        kind, idx = _parse_id(model, t["id"])
        base = x_hat[idx] if kind == "state" else h0[idx]
        if "value" in t:
            val = float(t["value"])
        else:
            val = base + float(t.get("offset", 0.0))
        key = (kind, idx)
        if key in seen and abs(seen[key] - val) > 0:
            raise InfeasibleAttackError(f"contradictory targets for {t['id']}")
        seen[key] = val
        tgt_kind.append(kind)
        tgt_idx.append(idx)
        tgt_val.append(val)
    tgt_val = np.array(tgt_val)
    is_state = np.array([k == "state" for k in tgt_kind], dtype=bool)
    tgt_idx = np.array(tgt_idx, dtype=int)

    current = np.array([x_hat[i] if st else h0[i] for i, st in zip(tgt_idx, is_state)])
    if not target.targets or np.all(tgt_val == current):
        return forge_from_shift(x_hat, np.zeros_like(x_hat), model, epsilon)

    limits = _Limits(model) if target.enforce_limits else None
    active: dict[int, float] = {}
    # a target that itself sits outside a box can never be met with limits on
    if limits is not None:
        for kind, idx, val, t in zip(tgt_kind, tgt_idx, tgt_val, target.targets):
            name = t["id"]
            lname = {"v_mag": "v", "theta_pmu": "theta", "g_flow_comp": "c"}.get(name.split(":")[0])
            lname = f"{lname}:{name.split(':', 1)[1]}" if lname else name
            if lname in limits.names:
                i = limits.names.index(lname)
                if not limits.lo[i] <= val <= limits.hi[i]:
                    raise InfeasibleAttackError(f"target {name} = {val:.6g} violates its operating limit",
                                                [lname])

    def tgt_fun(x):
        hx = eq.h(x)
        cur = np.array([x[i] if st else hx[i] for i, st in zip(tgt_idx, is_state)])
        return cur - tgt_val

    def tgt_jac(x):
        J = eq.jacobian(x)
        out = J[tgt_idx].copy()
        for n in np.flatnonzero(is_state):
            out[n] = 0.0
            out[n, tgt_idx[n]] = 1.0
        return out

    x = x_hat.copy()
    for _ in range(max_rounds):
        act = sorted(active)
        bounds = np.array([active[i] for i in act])

        def cons(xx):
            parts = [tgt_fun(xx), eq.coupling_residual(xx)]
            if act:
                parts.append(limits.values(xx)[act] - bounds)
            return np.concatenate(parts)

        def cons_jac(xx):
            parts = [tgt_jac(xx), eq.coupling_jacobian(xx)]
            if act:
                parts.append(limits.jacobian(xx, act))
            return np.vstack(parts)

        try:
            res = gauss_newton(lambda xx: xx - x_hat, lambda xx: np.eye(xx.size), x,
                               np.ones(x.size), cons, cons_jac, free=free, max_iter=100)
        except SolverError as exc:
            raise InfeasibleAttackError(f"no feasible attack: {exc}",
                                        [limits.names[i] for i in act] if limits else []) from None
        if np.max(np.abs(res.c), initial=0.0) > 1e-8:
            raise InfeasibleAttackError("no feasible attack: constraints cannot be met",
                                        [limits.names[i] for i in act] if limits else [])
        x = res.x
        if limits is None:
            break
        vals = limits.values(x)
        tol = 1e-9
        viol = np.flatnonzero((vals < limits.lo - tol) | (vals > limits.hi + tol))
        viol = [i for i in viol if i not in active]
        if not viol:
            break
        for i in viol:
            active[i] = limits.lo[i] if vals[i] < limits.lo[i] else limits.hi[i]
    else:
        raise InfeasibleAttackError("active-set loop did not settle",
                                    [limits.names[i] for i in sorted(active)])
    att = forge_from_shift(x_hat, x - x_hat, model, epsilon)
    if limits is not None:
        att.certificate["active_limits"] = [limits.names[i] for i in sorted(active)]
    return att


def limit_violations(x, model: IegsModel, tol: float = 1e-9) -> list[str]:
    """Names of operating limits broken by the estimated quantities at ``x``."""
    lim = _Limits(model)
    vals = lim.values(x)
    bad = np.flatnonzero((vals < lim.lo - tol) | (vals > lim.hi + tol))
    return [lim.names[i] for i in bad]


# --------------------------------------------------------------------------
# bias


def spectral_norm(M: np.ndarray, tol: float = 1e-8, max_iter: int = 10000, seed: int = 0) -> float:
    """Largest singular value by power iteration on M'M."""
    if M.size == 0 or not np.any(M):
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(M.shape[1])
    v /= np.linalg.norm(v)
    s = 0.0
    for _ in range(max_iter):
        w = M.T @ (M @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        s_new = np.sqrt(nw)
        if abs(s_new - s) <= tol * max(1.0, s_new):
            return float(s_new)
        s = s_new
    return float(s)


def coupling_selector(x, model: IegsModel) -> np.ndarray:
    """Mask of the states that enter any coupled injection."""
    if model.equations.cp_bus.size == 0:
        return np.zeros(model.n_state, dtype=bool)
    return np.any(model.equations.coupling_jacobian(x) != 0, axis=0)


def bias_analysis(x_hat, xi, dx, model: IegsModel, r) -> BiasReport:
    """Residual of an attack designed on a biased estimate ``x_hat + xi``.

    ``r`` is the operator's residual ``z - h(x_hat)``.  The exact value
    expands the attacked residual; the bound is its first-order estimate.
    """
    eq = model.equations
    x_hat, xi, dx, r = (np.asarray(a, dtype=float) for a in (x_hat, xi, dx, r))
    h = eq.h
    exact = np.linalg.norm(r + (h(x_hat + dx + xi) - h(x_hat + dx)) - (h(x_hat + xi) - h(x_hat)))
    J1 = eq.jacobian(x_hat + dx)
    J2 = eq.jacobian(x_hat)
    s = spectral_norm(J1 - J2)
    bound = np.linalg.norm(r) + s * np.linalg.norm(xi)
    sel = coupling_selector(x_hat, model)
    return BiasReport(
        xi=xi, exact=float(exact), bound=float(bound), spectral_norm=s,
        bias_off_coupling=bool(np.all(xi[sel] == 0)), shift_off_coupling=bool(np.all(dx[sel] == 0)),
        rc_bad=float(np.linalg.norm(eq.coupling_residual(x_hat + dx))),
        rc_designed=float(np.linalg.norm(eq.coupling_residual(x_hat + xi + dx))))
