"""Measurement functions h(x), coupling maps and their analytic Jacobians.

State layout is ``[v (buses), theta (buses), c (compressors), pi (nodes)]``.
Internally every quantity that can be metered is evaluated into a fixed
catalogue vector; a measurement plan is then a row selection from it.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import JacobianSingularityError, PressureReversalError
from .netmodel import IegsModel, coupling_pairs, incidence_matrices

JACOBIAN_FLOOR = 1e-6
# tolerance on pi_i^2 - pi_j^2 before a pipeline counts as reversed
REVERSAL_TOL = 1e-12


def line_flow(v_i, v_j, theta_i, theta_j, G, B):
    """Real and reactive flow leaving bus i on a line to bus j."""
    d = theta_i - theta_j
    c, s = np.cos(d), np.sin(d)
    p = v_i * v_i * G - v_i * v_j * (G * c + B * s)
    q = -v_i * v_i * B - v_i * v_j * (G * s - B * c)
    return p, q


def _line_flow_partials(va, vb, ta, tb, G, B):
    d = ta - tb
    c, s = np.cos(d), np.sin(d)
    gc_bs = G * c + B * s
    gs_bc = G * s - B * c
    p = va * va * G - va * vb * gc_bs
    q = -va * va * B - va * vb * gs_bc
    dp = (2 * va * G - vb * gc_bs, -va * gc_bs, va * vb * gs_bc, -va * vb * gs_bc)
    dq = (-2 * va * B - vb * gs_bc, -va * gs_bc, -va * vb * gc_bs, va * vb * gc_bs)
    return p, q, dp, dq


def weymouth_flow(pi_i: float, pi_j: float, W: float, pipeline: str = "?",
                  tol: float = REVERSAL_TOL) -> float:
    """Steady flow i -> j through a passive pipeline."""
    gap = pi_i * pi_i - pi_j * pi_j
    if gap < -tol * max(1.0, pi_i * pi_i):
        raise PressureReversalError(pipeline, pi_i, pi_j)
    return math.sqrt(W * max(gap, 0.0))


class NetworkEquations:
    """Compiled evaluator for one model.

    Catalogue layout::

        p_inj, q_inj (nb) | p_fwd, p_rev, q_fwd, q_rev (nl) | v, theta (nb)
        | g_inj (nn) | g_pipe (np) | c (nc) | pi (nn)
    """

    def __init__(self, model: IegsModel):
        self.model = model
        pw, gs = model.power, model.gas
        bi, ni = pw.bus_index, gs.node_index
        nb, nl = len(pw.buses), len(pw.lines)
        nn, npipe, nc = len(gs.nodes), len(gs.pipelines), len(gs.compressors)
        self.nb, self.nl, self.nn, self.npipe, self.nc = nb, nl, nn, npipe, nc
        self.nx = 2 * nb + nc + nn

        self.lf = np.array([bi[l.from_bus] for l in pw.lines], dtype=int)
        self.lt = np.array([bi[l.to_bus] for l in pw.lines], dtype=int)
        self.G = np.array([l.g for l in pw.lines], dtype=float)
        self.B = np.array([l.b for l in pw.lines], dtype=float)
        self.pf = np.array([ni[p.from_node] for p in gs.pipelines], dtype=int)
        self.pt = np.array([ni[p.to_node] for p in gs.pipelines], dtype=int)
        self.W = np.array([p.weymouth for p in gs.pipelines], dtype=float)
        self.pipe_ids = [p.id for p in gs.pipelines]

        _, B_pipe, B_comp = incidence_matrices(model)
        self.B_pipe = B_pipe.astype(float)
        self.B_comp = B_comp.astype(float)

        # state offsets
        self.iv = 0
        self.ith = nb
        self.ic = 2 * nb
        self.ipi = 2 * nb + nc

        # catalogue offsets
        off = {}
        k = 0
        for name, n in (("p_inj", nb), ("q_inj", nb), ("p_flow_fwd", nl), ("p_flow_rev", nl),
                        ("q_flow_fwd", nl), ("q_flow_rev", nl), ("v_mag", nb), ("theta_pmu", nb),
                        ("g_inj", nn), ("g_flow_pipe", npipe), ("g_flow_comp", nc), ("pi", nn)):
            off[name] = k
            k += n
        self.offsets = off
        self.n_catalog = k

        element_index = {
            "p_inj": bi, "q_inj": bi, "v_mag": bi, "theta_pmu": bi,
            "p_flow_fwd": pw.line_index, "p_flow_rev": pw.line_index,
            "q_flow_fwd": pw.line_index, "q_flow_rev": pw.line_index,
            "g_inj": ni, "pi": ni, "g_flow_pipe": gs.pipeline_index,
            "g_flow_comp": gs.compressor_index,
        }
        self.select = np.array(
            [off[m.kind] + element_index[m.kind][m.element] for m in model.plan], dtype=int)
        self.is_power_meter = np.array(
            [m.kind in ("p_inj", "q_inj", "v_mag", "theta_pmu") or m.kind.startswith(("p_flow", "q_flow"))
             for m in model.plan], dtype=bool)

        cm = coupling_pairs(model)
        self.coupling = cm
        self.cp_bus = np.array([bi[p.bus] for p in cm.pairs], dtype=int)
        self.cp_node = np.array([ni[p.node] for p in cm.pairs], dtype=int)
        self.cp_ratio = np.array([p.ratio for p in cm.pairs], dtype=float)

    # ------------------------------------------------------------------
    # evaluation

    def _gaps(self, x):
        pi = x[self.ipi:]
        return pi[self.pf] ** 2 - pi[self.pt] ** 2

    def check_domain(self, x):
        gaps = self._gaps(x)
        pi = x[self.ipi:]
        bad = gaps < -REVERSAL_TOL * np.maximum(1.0, pi[self.pf] ** 2)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise PressureReversalError(self.pipe_ids[k], pi[self.pf[k]], pi[self.pt[k]])
        return np.maximum(gaps, 0.0)

    def catalog(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        nb = self.nb
        v, th = x[:nb], x[nb:2 * nb]
        c = x[self.ic:self.ipi]
        pi = x[self.ipi:]
        pfw, qfw = line_flow(v[self.lf], v[self.lt], th[self.lf], th[self.lt], self.G, self.B)
        prv, qrv = line_flow(v[self.lt], v[self.lf], th[self.lt], th[self.lf], self.G, self.B)
        p_inj = np.bincount(self.lf, pfw, nb) + np.bincount(self.lt, prv, nb)
        q_inj = np.bincount(self.lf, qfw, nb) + np.bincount(self.lt, qrv, nb)
        g = np.sqrt(self.W * self.check_domain(x))
        g_inj = self.B_pipe @ g + self.B_comp @ c
        return np.concatenate([p_inj, q_inj, pfw, prv, qfw, qrv, v, th, g_inj, g, c, pi])

    def catalog_jacobian(self, x, floor: float = JACOBIAN_FLOOR) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        nb, nl, nx = self.nb, self.nl, self.nx
        off = self.offsets
        v, th = x[:nb], x[nb:2 * nb]
        pi = x[self.ipi:]
        J = np.zeros((self.n_catalog, nx))
        lines = np.arange(nl)
        f, t = self.lf, self.lt

        def put(row0, dp, va_col, vb_col, ta_col, tb_col):
            rows = row0 + lines
            J[rows, va_col] += dp[0]
            J[rows, vb_col] += dp[1]
            J[rows, ta_col] += dp[2]
            J[rows, tb_col] += dp[3]

        _, _, dpf, dqf = _line_flow_partials(v[f], v[t], th[f], th[t], self.G, self.B)
        _, _, dpr, dqr = _line_flow_partials(v[t], v[f], th[t], th[f], self.G, self.B)
        put(off["p_flow_fwd"], dpf, f, t, nb + f, nb + t)
        put(off["q_flow_fwd"], dqf, f, t, nb + f, nb + t)
        put(off["p_flow_rev"], dpr, t, f, nb + t, nb + f)
        put(off["q_flow_rev"], dqr, t, f, nb + t, nb + f)
        # injections: rows of forward flows land on the from bus, reverse on the to bus
        for inj, fw, rv in (("p_inj", "p_flow_fwd", "p_flow_rev"), ("q_inj", "q_flow_fwd", "q_flow_rev")):
            np.add.at(J, off[inj] + f, J[off[fw] + lines])
            np.add.at(J, off[inj] + t, J[off[rv] + lines])
        J[off["v_mag"] + np.arange(nb), np.arange(nb)] = 1.0
        J[off["theta_pmu"] + np.arange(nb), nb + np.arange(nb)] = 1.0

        gaps = self.check_domain(x)
        small = gaps < floor
        if small.any():
            k = int(np.flatnonzero(small)[0])
            raise JacobianSingularityError(self.pipe_ids[k], float(gaps[k]))
        g = np.sqrt(self.W * gaps)
        rows = off["g_flow_pipe"] + np.arange(self.npipe)
        J[rows, self.ipi + self.pf] = self.W * pi[self.pf] / g
        J[rows, self.ipi + self.pt] = -self.W * pi[self.pt] / g
        J[off["g_flow_comp"] + np.arange(self.nc), self.ic + np.arange(self.nc)] = 1.0
        J[off["g_inj"]:off["g_inj"] + self.nn] = (
            self.B_pipe @ J[rows] + self.B_comp @ J[off["g_flow_comp"]:off["g_flow_comp"] + self.nc])
        J[off["pi"] + np.arange(self.nn), self.ipi + np.arange(self.nn)] = 1.0
        return J

    def h(self, x) -> np.ndarray:
        return self.catalog(x)[self.select]

    def jacobian(self, x, floor: float = JACOBIAN_FLOOR) -> np.ndarray:
        return self.catalog_jacobian(x, floor)[self.select]

    # ------------------------------------------------------------------
    # coupling

    def coupling_sides(self, x):
        """Power-side and gas-side estimates of each coupled device's gas exchange.

        For a gas-fired unit the left side is gamma * p_i (gas it burns) and the
        right side is the offtake -g_j.  P2G pairs use the same form: chi * p_i
        is negative (power drawn) and so is -g_j (gas produced).
        """
        cat = self.catalog(x)
        p = cat[self.offsets["p_inj"]:self.offsets["p_inj"] + self.nb]
        g = cat[self.offsets["g_inj"]:self.offsets["g_inj"] + self.nn]
        return self.cp_ratio * p[self.cp_bus], -g[self.cp_node]

    def coupling_residual(self, x) -> np.ndarray:
        left, right = self.coupling_sides(x)
        return left - right

    def coupling_jacobian(self, x, floor: float = JACOBIAN_FLOOR) -> np.ndarray:
        J = self.catalog_jacobian(x, floor)
        o = self.offsets
        return (self.cp_ratio[:, None] * J[o["p_inj"] + self.cp_bus]
                + J[o["g_inj"] + self.cp_node])

    def node_injections(self, x) -> np.ndarray:
        cat = self.catalog(x)
        return cat[self.offsets["g_inj"]:self.offsets["g_inj"] + self.nn]

    def bus_injections(self, x):
        cat = self.catalog(x)
        o = self.offsets
        return cat[o["p_inj"]:o["p_inj"] + self.nb], cat[o["q_inj"]:o["q_inj"] + self.nb]

    def pipe_flows(self, x) -> np.ndarray:
        cat = self.catalog(x)
        o = self.offsets["g_flow_pipe"]
        return cat[o:o + self.npipe]


def h_full(x, model: IegsModel) -> np.ndarray:
    return model.equations.h(x)


def jacobian_h(x, model: IegsModel, floor: float = JACOBIAN_FLOOR) -> np.ndarray:
    return model.equations.jacobian(x, floor)


def h_coupling(x, model: IegsModel) -> tuple[np.ndarray, np.ndarray]:
    return model.equations.coupling_sides(x)


def coupling_residual(x, model: IegsModel) -> np.ndarray:
    return model.equations.coupling_residual(x)


def coupling_jacobian(x, model: IegsModel, floor: float = JACOBIAN_FLOOR) -> np.ndarray:
    return model.equations.coupling_jacobian(x, floor)
