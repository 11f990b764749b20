"""Detailed turbo and piston compressor physics, evaluated after estimation.

The estimator treats a compressor as a flow ``c`` between two pressures.
Once ``c``, ``pi_i`` and ``pi_j`` are estimated, the thermodynamic chain
(density, volumetric flow, enthalpy change, input power, speed, efficiency)
follows in closed form; the only implicit step is the turbo speed, a root
of a quadratic in ``n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .netmodel import DetailedCompressorParams, IegsModel


def f1(x: float, a) -> float:
    """``a = (a2, a1, a0)``, so ``f1 = a2 x^2 + a1 x + a0``."""
    return a[0] * x * x + a[1] * x + a[2]


def f2(x: float, y: float, A) -> float:
    return float(np.array([x * x, x, 1.0]) @ np.asarray(A, dtype=float) @ np.array([y * y, y, 1.0]))


class TurboInfeasibleError(DomainError):
    pass


@dataclass
class ExtendedCompressorState:
    kind: str
    rho: float
    u: float
    v: float
    h: float
    P_c: float
    eta: float
    b: float
    n: float
    P_bar: float
    m: float | None = None
    violations: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def compressibility(pi_i: float, p: DetailedCompressorParams) -> float:
    r = pi_i / p.pi_c
    return 1.0 + 0.257 * r - 0.533 * (p.T_c / p.T) * r


def enthalpy(pi_i: float, pi_j: float, u: float, p: DetailedCompressorParams) -> float:
    k = p.kappa
    return p.R_s * p.T * (k / (k - 1.0)) * ((pi_j / pi_i) ** ((k - 1.0) / k) - 1.0) * u


def turbo_speed(v: float, h: float, p: DetailedCompressorParams) -> tuple[float, list]:
    """Speed ``n`` with ``f2(v, n; A2) = h``; the smaller in-range root wins.

    Out-of-range solutions return the real root closest to the speed range.
    """
    A = np.asarray(p.A2, dtype=float)
    w = np.array([v * v, v, 1.0]) @ A
    qa, qb, qc = w[0], w[1], w[2] - h
    notes = []
    if abs(qa) < 1e-300:
        if abs(qb) < 1e-300:
            raise TurboInfeasibleError("turbo map has no speed dependence")
        roots = [-qc / qb]
    else:
        disc = qb * qb - 4.0 * qa * qc
        if disc < 0:
            raise TurboInfeasibleError(f"no real speed for v={v:g}, h={h:g}")
        sq = math.sqrt(disc)
        # cancellation-free pair of roots
        t = -0.5 * (qb + math.copysign(sq, qb))
        roots = sorted({t / qa, qc / t} if t != 0 else {0.0})
    inside = [r for r in roots if p.n_min <= r <= p.n_max]
    if len(inside) > 1:
        notes.append("two speeds in range; lower one taken")
    if inside:
        n = inside[0]
    else:
        n = min(roots, key=lambda r: max(p.n_min - r, r - p.n_max))
    # one Newton polish on the quadratic
    d = 2 * qa * n + qb
    if d != 0:
        n -= (qa * n * n + qb * n + qc) / d
    return float(n), notes


def solve_detailed_state(c: float, pi_i: float, pi_j: float,
                         p: DetailedCompressorParams) -> ExtendedCompressorState:
    if not (pi_i > 0 and pi_j > 0):
        raise DomainError("pressures must be positive")
    if c < 0:
        raise DomainError("compressor flow must be nonnegative")
    u = compressibility(pi_i, p)
    rho = pi_i / (p.R_s * p.T * u)
    v = c / rho
    h = enthalpy(pi_i, pi_j, u, p)
    notes = []
    if p.kind == "turbo":
        n, notes = turbo_speed(v, h, p)
        eta = f2(v, n, p.A3)
        m = None
    elif p.kind == "piston":
        n = v / p.V0
        eta = p.eta_bar
        m = p.V0 * h / (2.0 * math.pi * eta) * rho
    else:
        raise ValueError(f"unknown compressor kind {p.kind!r}")
    if eta == 0:
        raise DomainError("zero adiabatic efficiency")
    P_c = c * h / eta
    b = f1(P_c, p.a1)
    P_bar = f2(n, p.T_a, p.A1)

    viol = []
    if P_c > P_bar:
        viol.append("input power above its ceiling")
    if not p.n_min <= n <= p.n_max:
        viol.append("speed out of range")
    if p.kind == "turbo" and not f1(v, p.a2) <= h <= f1(v, p.a3):
        viol.append("enthalpy change out of range")
    return ExtendedCompressorState(p.kind, rho, u, v, h, P_c, eta, b, n, P_bar, m, viol, notes)


def detailed_residuals(s: ExtendedCompressorState, c: float, pi_i: float, pi_j: float,
                       p: DetailedCompressorParams) -> dict:
    """Equality residuals of the detailed model at a given state."""
    out = {
        "density": s.rho - pi_i / (p.R_s * p.T * s.u),
        "compressibility": s.u - compressibility(pi_i, p),
        "volume_flow": s.v * s.rho - c,
        "enthalpy": s.h - enthalpy(pi_i, pi_j, s.u, p),
        "input_power": s.P_c * s.eta - c * s.h,
        "consumption": s.b - f1(s.P_c, p.a1),
        "power_ceiling": s.P_bar - f2(s.n, p.T_a, p.A1),
    }
    if p.kind == "turbo":
        out["speed"] = s.h - f2(s.v, s.n, p.A2)
        out["efficiency"] = s.eta - f2(s.v, s.n, p.A3)
    else:
        out["speed"] = s.n * p.V0 - s.v
        out["torque"] = s.m * 2.0 * math.pi * s.eta - p.V0 * s.h * s.rho
        out["efficiency"] = s.eta - p.eta_bar
    return out


def extended_states(x_hat, model: IegsModel) -> dict:
    """Detailed states of every compressor that carries detailed parameters.

    Flows and pressures are read from the estimated state, i.e. from the
    estimated measurements ``h(x̂)``.
    """
    eq = model.equations
    x_hat = np.asarray(x_hat, dtype=float)
    out = {}
    gs = model.gas
    for k, comp in enumerate(gs.compressors):
        if comp.detailed is None:
            continue
        c = float(x_hat[eq.ic + k])
        pi_i = float(x_hat[eq.ipi + gs.node_index[comp.from_node]])
        pi_j = float(x_hat[eq.ipi + gs.node_index[comp.to_node]])
        try:
            out[comp.id] = solve_detailed_state(max(c, 0.0), pi_i, pi_j, comp.detailed)
        except DomainError as exc:
            out[comp.id] = str(exc)
    return out


def p2g_residual(x_hat, model: IegsModel) -> dict:
    """``|g_j - chi * p_f|`` per P2G pair, ``p_f`` being the power drawn at bus i."""
    eq = model.equations
    x_hat = np.asarray(x_hat, dtype=float)
    p, _ = eq.bus_injections(x_hat)
    g = eq.node_injections(x_hat)
    out = {}
    for pair in model.equations.coupling.p2g:
        i = model.power.bus_index[pair.bus]
        j = model.gas.node_index[pair.node]
        out[pair.device] = abs(g[j] - pair.ratio * (-p[i]))
    return out
