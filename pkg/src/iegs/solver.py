"""Damped, equality-constrained Gauss-Newton.

Minimizes ``0.5 * sum(w * f(x)**2)`` subject to ``c(x) = 0``.  Each iteration
solves the KKT system

    [ J'WJ + mu*I   A' ] [d]   = - [ J'W f ]
    [ A             0  ] [lam]     [ c     ]

and accepts the step when the exact-penalty merit ``0.5 f'Wf + nu*|c|_1``
does not increase.  A full step that fails the test gets one second-order
correction (a minimum-norm pull back onto the linearized constraints) before
it is rejected; rejected steps (including steps that leave the domain of the
model functions) raise the Levenberg parameter mu tenfold.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConvergenceError, DomainError, SolverError

log = logging.getLogger(__name__)

MU0 = 1e-6
MU_MIN = 1e-12
MU_MAX = 1e10


@dataclass
class SolveResult:
    x: np.ndarray
    f: np.ndarray
    c: np.ndarray
    multipliers: np.ndarray
    objective: float
    iterations: int
    converged: bool
    stationarity: float
    trace: list = field(default_factory=list)


def _kkt_solve(H, g, A, c):
    n, m = H.shape[0], A.shape[0]
    if m == 0:
        try:
            return np.linalg.solve(H, -g), np.zeros(0)
        except np.linalg.LinAlgError:
            raise SolverError("normal matrix singular") from None
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    K[:n, n:] = A.T
    K[n:, :n] = A
    rhs = -np.concatenate([g, c])
    try:
        sol = np.linalg.solve(K, rhs)
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        # redundant constraint rows: fall back to a minimum-norm solution
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        if np.linalg.norm(K @ sol - rhs) > 1e-8 * (1 + np.linalg.norm(rhs)):
            raise SolverError("KKT system singular") from None
    return sol[:n], sol[n:]


def gauss_newton(
    fun: Callable[[np.ndarray], np.ndarray],
    jac: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    weights: np.ndarray,
    cons: Callable[[np.ndarray], np.ndarray] | None = None,
    cons_jac: Callable[[np.ndarray], np.ndarray] | None = None,
    free: np.ndarray | None = None,
    step_tol: float = 1e-8,
    max_iter: int = 50,
    polish: int = 2,
    raise_on_failure: bool = True,
) -> SolveResult:
    """Run the damped constrained Gauss-Newton iteration from ``x0``.

    ``free`` is a boolean mask of the variables being solved for; the others
    keep their value from ``x0``.  Once a step shorter than ``step_tol`` is
    taken the loop performs ``polish`` further undamped iterations, which
    cost little and squeeze out the last digits.
    """
    x = np.array(x0, dtype=float)
    n = x.size
    free = np.ones(n, dtype=bool) if free is None else np.asarray(free, dtype=bool)
    w = np.asarray(weights, dtype=float)
    if cons is None:
        cons = lambda _x: np.zeros(0)  # noqa: E731
        cons_jac = lambda _x: np.zeros((0, n))  # noqa: E731

    def evaluate(xx):
        return fun(xx), cons(xx)

    try:
        f, c = evaluate(x)
    except DomainError as exc:
        raise SolverError(f"initial point outside domain: {exc}") from None
    nu = 1.0
    mu = MU0
    trace = []
    lam = np.zeros(c.size)
    converged = False
    polish_left = None
    it = 0

    def merit(ff, cc, nu_):
        return 0.5 * float(np.sum(w * ff * ff)) + nu_ * float(np.sum(np.abs(cc)))

    while it < max_iter:
        it += 1
        J = jac(x)[:, free]
        A = cons_jac(x)[:, free]
        WJ = J * w[:, None]
        H = J.T @ WJ
        g = WJ.T @ f
        scale = max(1.0, float(np.max(np.abs(np.diag(H)))) if H.size else 1.0)
        accepted = False
        while mu <= MU_MAX:
            damp = 0.0 if polish_left is not None else mu * scale
            d, lam_new = _kkt_solve(H + damp * np.eye(H.shape[0]), g, A, c)
            step = np.zeros(n)
            step[free] = d
            if lam_new.size:
                nu = max(nu, 2.0 * float(np.max(np.abs(lam_new))))
            phi = merit(f, c, nu)
            xt = x + step
            try:
                ft, ct = evaluate(xt)
            except DomainError:
                mu *= 10.0
                polish_left = None
                continue
            phit = merit(ft, ct, nu)
            small = np.linalg.norm(d) < step_tol
            if phit > phi + 1e-12 * (1.0 + phi) and not small and ct.size:
                # second-order correction: pull the trial point back onto the
                # linearized constraints before giving up on the full step
                soc = np.zeros(n)
                soc[free] = -np.linalg.lstsq(A, ct, rcond=None)[0]
                try:
                    fs, cs = evaluate(xt + soc)
                    phis = merit(fs, cs, nu)
                except DomainError:
                    phis = np.inf
                if phis < phit:
                    xt, ft, ct, phit = xt + soc, fs, cs, phis
                    step = xt - x
            if phit <= phi + 1e-12 * (1.0 + phi) or small:
                x, f, c, lam = xt, ft, ct, lam_new
                mu = max(mu / 10.0, MU_MIN)
                accepted = True
                break
            mu *= 10.0
            polish_left = None
        if not accepted:
            trace.append({"iter": it, "merit": phi, "step": None, "mu": mu})
            break
        snorm = float(np.linalg.norm(step[free]))
        trace.append({"iter": it, "merit": phit, "step": snorm, "mu": mu})
        log.debug("gn iter %d merit %.6e step %.3e", it, phit, snorm)
        if polish_left is not None:
            polish_left -= 1
            if polish_left <= 0:
                converged = True
                break
        elif snorm < step_tol:
            if polish <= 0:
                converged = True
                break
            polish_left = polish

    if polish_left is not None:
        converged = True
    J = jac(x)[:, free]
    A = cons_jac(x)[:, free]
    stat = J.T @ (w * f) + (A.T @ lam if lam.size == A.shape[0] and lam.size else 0.0)
    res = SolveResult(
        x=x, f=f, c=c, multipliers=lam, objective=0.5 * float(np.sum(w * f * f)),
        iterations=it, converged=converged, stationarity=float(np.linalg.norm(stat)), trace=trace)
    if not converged and raise_on_failure:
        raise ConvergenceError(
            f"Gauss-Newton did not converge in {it} iterations "
            f"(objective {res.objective:.6g}, |c| {np.linalg.norm(c):.3g})", trace)
    return res
