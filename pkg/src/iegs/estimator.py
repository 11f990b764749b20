"""Weighted least-squares state estimation and bad-data detection.

Three estimators share one Gauss-Newton core:

* ``estimate_power`` and ``estimate_gas`` work on one subsystem alone;
* ``estimate_iegs`` works on the whole model and, in ``"pse"`` mode, forces
  the power-side and gas-side views of every coupled unit to agree.  The
  ``"ose"`` mode drops that constraint.

The detector compares the residual against a threshold and the coupling
residual against a small epsilon.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.stats import chi2

from .errors import DomainError, RankDeficiencyError
from .netmodel import IegsModel, gas_only, power_only
from .solver import gauss_newton

log = logging.getLogger(__name__)

EPSILON = 1e-5
CHI2_CONFIDENCE = 0.99


@dataclass
class EstimationResult:
    x: np.ndarray
    objective: float
    residual: np.ndarray
    coupling_residual: np.ndarray
    iterations: int
    converged: bool
    multipliers: np.ndarray
    stationarity: float
    mode: str
    n_free: int
    n_constraints: int
    weights: np.ndarray
    trace: list = field(default_factory=list)

    @property
    def r_norm(self) -> float:
        return float(np.linalg.norm(self.residual))

    @property
    def rc_norm(self) -> float:
        return float(np.linalg.norm(self.coupling_residual))

    @property
    def weighted_ss(self) -> float:
        return float(np.sum(self.weights * self.residual ** 2))


@dataclass
class DetectionVerdict:
    r_norm: float
    weighted_ss: float
    rc_norm: float
    tau: float
    tau_kind: str  # "chi2" compares weighted_ss, "norm" compares r_norm
    epsilon: float
    global_bad_data: bool
    coupling_inconsistency: bool

    @property
    def clean(self) -> bool:
        return not (self.global_bad_data or self.coupling_inconsistency)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def free_mask(model: IegsModel) -> np.ndarray:
    """Variables the estimator solves for.

    Angles are absolute when the plan carries PMU readings.  Otherwise one
    angle per electrically connected group of buses is held at its start
    value (the reference bus where it belongs to the group).
    """
    free = np.ones(model.n_state, dtype=bool)
    pw = model.power
    nb = len(pw.buses)
    if nb == 0:
        return free
    bi = pw.bus_index
    pmu_buses = {bi[m.element] for m in model.plan if m.kind == "theta_pmu"}
    if pw.lines:
        i = [bi[l.from_bus] for l in pw.lines]
        j = [bi[l.to_bus] for l in pw.lines]
        adj = coo_matrix((np.ones(len(i)), (i, j)), shape=(nb, nb))
        _, label = connected_components(adj, directed=False)
    else:
        label = np.arange(nb)
    ref = bi.get(pw.reference_bus) if pw.reference_bus is not None else None
    for comp in np.unique(label):
        members = np.flatnonzero(label == comp)
        if pmu_buses.intersection(members):
            continue
        pin = ref if ref is not None and ref in members else int(members[0])
        free[nb + pin] = False
    return free


def initial_state(model: IegsModel, z: np.ndarray) -> np.ndarray:
    """Start point read off the directly metered quantities.

    Pressures come from a least-squares fit of squared pressures to the
    pressure meters and the pipeline flow meters, since a flat pressure
    profile leaves every Weymouth derivative undefined.
    """
    eq = model.equations
    nb, nn = model.n_buses, model.n_nodes
    x = np.zeros(model.n_state)
    x[:nb] = 1.0
    pw, gs = model.power, model.gas
    thetas = []
    rows, rhs = [], []
    for k, m in enumerate(model.plan):
        if m.kind == "v_mag":
            x[pw.bus_index[m.element]] = z[k]
        elif m.kind == "theta_pmu":
            thetas.append(z[k])
        elif m.kind == "g_flow_comp":
            x[eq.ic + gs.compressor_index[m.element]] = z[k]
        elif m.kind == "pi":
            row = np.zeros(nn)
            row[gs.node_index[m.element]] = 1.0
            rows.append(row)
            rhs.append(z[k] ** 2)
        elif m.kind == "g_flow_pipe":
            p = gs.pipelines[gs.pipeline_index[m.element]]
            row = np.zeros(nn)
            row[gs.node_index[p.from_node]] = 1.0
            row[gs.node_index[p.to_node]] = -1.0
            rows.append(row)
            rhs.append(max(z[k], 0.0) ** 2 / p.weymouth)
    if thetas:
        x[nb:2 * nb] = float(np.mean(thetas))
    if nn:
        mid = np.array([0.5 * (n.pi_min + n.pi_max) if np.isfinite(n.pi_max) else max(n.pi_min, 1.0)
                        for n in gs.nodes])
        s = mid ** 2
        if rows:
            A, b = np.array(rows), np.array(rhs)
            # light pull towards the bound midpoint keeps unmetered nodes defined
            A = np.vstack([A, 1e-6 * np.eye(nn)])
            b = np.concatenate([b, 1e-6 * s])
            s = np.linalg.lstsq(A, b, rcond=None)[0]
        s = _orient(model, np.maximum(s, 1e-6))
        x[eq.ipi:] = np.sqrt(s)
    return x


def _orient(model, s, margin=1e-3):
    """Nudge squared pressures so every pipeline points downhill."""
    eq = model.equations
    for _ in range(len(s) + 1):
        gaps = s[eq.pf] - s[eq.pt]
        bad = np.flatnonzero(gaps < margin)
        if not bad.size:
            break
        for k in bad:
            need = margin - (s[eq.pf[k]] - s[eq.pt[k]])
            s[eq.pf[k]] += need
    return s


def _default_weights(model: IegsModel, variances) -> np.ndarray:
    if variances is None:
        variances = np.array([m.std for m in model.plan]) ** 2
    variances = np.asarray(variances, dtype=float)
    if variances.shape != (len(model.plan),) or np.any(variances <= 0):
        raise ValueError("variances must be positive and aligned with the plan")
    return 1.0 / variances


def _estimate(model: IegsModel, z, variances, constrained: bool, x0, mode: str,
              raise_on_failure: bool = True) -> EstimationResult:
    z = np.asarray(z, dtype=float)
    if z.shape != (len(model.plan),):
        raise ValueError(f"measurement vector has length {z.size}, plan has {len(model.plan)}")
    eq = model.equations
    w = _default_weights(model, variances)
    free = free_mask(model)
    x0 = initial_state(model, z) if x0 is None else np.asarray(x0, dtype=float).copy()

    try:
        J0 = eq.jacobian(x0)[:, free]
    except DomainError:
        J0 = None
    if J0 is not None and free.sum() and np.linalg.matrix_rank(J0 * np.sqrt(w)[:, None]) < free.sum():
        raise RankDeficiencyError(
            f"system unobservable: Jacobian rank {np.linalg.matrix_rank(J0)} < {int(free.sum())} states")

    use_cons = constrained and eq.cp_bus.size > 0
    res = gauss_newton(
        lambda x: eq.h(x) - z,
        eq.jacobian,
        x0, w,
        cons=eq.coupling_residual if use_cons else None,
        cons_jac=eq.coupling_jacobian if use_cons else None,
        free=free,
        raise_on_failure=raise_on_failure,
    )
    r = z - eq.h(res.x)
    rc = eq.coupling_residual(res.x)
    return EstimationResult(
        x=res.x, objective=res.objective, residual=r, coupling_residual=rc,
        iterations=res.iterations, converged=res.converged, multipliers=res.multipliers,
        stationarity=res.stationarity, mode=mode, n_free=int(free.sum()),
        n_constraints=int(eq.cp_bus.size) if use_cons else 0, weights=w, trace=res.trace)


def estimate_iegs(z, model: IegsModel, variances=None, mode: str = "pse", x0=None,
                  raise_on_failure: bool = True) -> EstimationResult:
    """Coupled estimate; ``mode`` is ``"pse"`` (coupling enforced) or ``"ose"``."""
    if mode not in ("pse", "ose"):
        raise ValueError(f"mode must be 'pse' or 'ose', got {mode!r}")
    return _estimate(model, z, variances, mode == "pse", x0, mode, raise_on_failure)


def estimate_power(z_p, model: IegsModel, variances=None, x0=None) -> EstimationResult:
    """Power-only estimate; ``z_p`` follows the power meters of the plan in order."""
    return _estimate(power_only(model), z_p, variances, False, x0, "power")


def estimate_gas(z_g, model: IegsModel, variances=None, x0=None) -> EstimationResult:
    """Gas-only estimate over compressor flows and pressures."""
    return _estimate(gas_only(model), z_g, variances, False, x0, "gas")


def chi2_threshold(result: EstimationResult, confidence: float = CHI2_CONFIDENCE) -> float:
    dof = max(result.residual.size - result.n_free + result.n_constraints, 1)
    return float(chi2.ppf(confidence, dof))


def detect_bad_data(z, result: EstimationResult, tau: float | None = None,
                    epsilon: float = EPSILON, check_coupling: bool = True) -> DetectionVerdict:
    """Two-tier test on an estimation result.

    With ``tau=None`` the weighted sum of squared residuals is compared with
    the 99th chi-square percentile; an explicit ``tau`` is compared with the
    plain residual norm.
    """
    r_norm = result.r_norm
    wss = result.weighted_ss
    rc_norm = result.rc_norm if check_coupling else 0.0
    if tau is None:
        tau_v, kind = chi2_threshold(result), "chi2"
        flag = wss > tau_v
    else:
        tau_v, kind = float(tau), "norm"
        flag = r_norm > tau_v
    return DetectionVerdict(
        r_norm=r_norm, weighted_ss=wss, rc_norm=rc_norm, tau=tau_v, tau_kind=kind,
        epsilon=float(epsilon), global_bad_data=bool(flag),
        coupling_inconsistency=bool(check_coupling and rc_norm > epsilon))
