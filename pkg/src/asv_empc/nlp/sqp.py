"""Dense SQP for small box-bounded, equality-constrained NLPs.

Each iteration solves a QP with a damped-BFGS Lagrangian Hessian and the
linearised equalities, then backtracks on the l1 merit function
``f + rho * ||c||_1``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fd import gradient_fd, jacobian_fd
from .qp import solve_qp

CONVERGED = "converged"
MAX_ITER = "max_iter"
INFEASIBLE_STEP = "infeasible_step"
STALLED = "stalled"


@dataclass
class NlpProblem:
    """``min objective(x)`` s.t. ``eq_constraints(x) = 0``, ``lower <= x <= upper``.

    ``gradient`` / ``jacobian`` default to central differences. ``evaluate``,
    when given, returns ``(f, c)`` in one call and replaces the two separate
    callbacks during line search.
    """

    dim: int
    objective: Callable[[np.ndarray], float]
    lower: np.ndarray
    upper: np.ndarray
    eq_constraints: Optional[Callable[[np.ndarray], np.ndarray]] = None
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    evaluate: Optional[Callable[[np.ndarray], tuple]] = None

    def __post_init__(self):
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (self.dim,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (self.dim,)).copy()
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")


@dataclass
class SolveOptions:
    max_iterations: int = 100
    kkt_tolerance: float = 1e-8
    constraint_tolerance: float = 1e-9
    fd_step: float = 1e-6
    merit_penalty: float = 1.0
    merit_penalty_growth: float = 2.0
    backtrack: float = 0.5
    armijo: float = 1e-4
    min_step: float = 1e-10
    bfgs_damping: float = 0.2
    # stop once the merit function moves less than ftol * (1 + |merit|) on
    # ftol_streak consecutive feasible steps; 0 disables (kinks can pin kkt)
    ftol: float = 0.0
    ftol_streak: int = 3

    def __post_init__(self):
        eps = np.finfo(float).eps
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for name in ("kkt_tolerance", "constraint_tolerance", "fd_step", "merit_penalty", "min_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        self.kkt_tolerance = max(self.kkt_tolerance, 10 * eps)
        self.constraint_tolerance = max(self.constraint_tolerance, 10 * eps)
        if not self.merit_penalty_growth > 1:
            raise ValueError("merit_penalty_growth must exceed 1")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if not 0 < self.armijo < 0.5:
            raise ValueError("armijo constant must lie in (0, 0.5)")


@dataclass
class SolveResult:
    x: np.ndarray
    objective: float
    status: str
    iterations: int
    kkt_residual: float
    constraint_violation: float
    multipliers: np.ndarray
    hessian: np.ndarray
    trace: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


TRACE_FIELDS = ("iteration", "objective", "kkt", "violation", "step", "merit_before", "merit_after", "penalty")


def write_trace_csv(result, path) -> None:
    """Iteration trace of a :class:`SolveResult` (or a bare list of trace rows) as CSV."""
    rows = getattr(result, "trace", result)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_FIELDS)
        for row in rows:
            w.writerow([row[k] for k in TRACE_FIELDS])


class _Evaluator:
    def __init__(self, problem: NlpProblem, options: SolveOptions):
        self.p = problem
        self.o = options

    def values(self, x):
        p = self.p
        if p.evaluate is not None:
            f, c = p.evaluate(x)
        else:
            f = p.objective(x)
            c = p.eq_constraints(x) if p.eq_constraints is not None else ()
        return float(f), np.atleast_1d(np.asarray(c, dtype=float))

    def derivatives(self, x, m):
        p = self.p
        g = p.gradient(x) if p.gradient is not None else gradient_fd(p.objective, x, self.o.fd_step)
        if m == 0:
            J = np.zeros((0, x.size))
        elif p.jacobian is not None:
            J = np.atleast_2d(p.jacobian(x))
        else:
            J = jacobian_fd(p.eq_constraints, x, self.o.fd_step)
        return np.asarray(g, dtype=float), J


def _kkt_residual(x, g, J, nu, lo, hi):
    grad_l = g + J.T @ nu
    return float(np.max(np.abs(x - np.clip(x - grad_l, lo, hi)), initial=0.0))


def _finite(*arrs):
    return all(np.all(np.isfinite(a)) for a in arrs)


def solve(problem: NlpProblem, initial, options: SolveOptions | None = None,
          hessian: np.ndarray | None = None) -> SolveResult:
    """Run SQP from ``initial`` (projected into the box).

    ``hessian`` seeds the BFGS matrix, e.g. from a previous related solve.
    """
    o = options or SolveOptions()
    ev = _Evaluator(problem, o)
    lo, hi = problem.lower, problem.upper
    x = np.clip(np.asarray(initial, dtype=float).copy(), lo, hi)
    n = x.size
    if n != problem.dim:
        raise ValueError(f"initial point has length {n}, problem dim is {problem.dim}")

    try:
        f, c = ev.values(x)
        m = c.size
        g, J = ev.derivatives(x, m)
    except FloatingPointError:
        f, c, g, J, m = math.nan, np.zeros(0), np.zeros(n), np.zeros((0, n)), 0
    if not (_finite(f, c, g, J)):
        return SolveResult(x, f, INFEASIBLE_STEP, 0, math.inf, math.inf, np.zeros(m), np.eye(n), [])

    seeded = hessian is not None and hessian.shape == (n, n) and _finite(hessian)
    B = hessian.copy() if seeded else np.eye(n)
    scale_pending = not seeded
    nu = np.zeros(m)
    rho = o.merit_penalty
    at_lower = x <= lo
    at_upper = (x >= hi) & ~at_lower
    trace = []
    status = MAX_ITER
    identity_retry = False
    flat = 0
    it = 0

    for it in range(1, o.max_iterations + 1):
        qp = solve_qp(B, g, J, -c, lo - x, hi - x, at_lower, at_upper)
        d, nu_qp = qp.d, qp.nu
        at_lower, at_upper = qp.at_lower, qp.at_upper
        viol = float(np.max(np.abs(c), initial=0.0))
        kkt = _kkt_residual(x, g, J, nu_qp, lo, hi)
        if kkt <= o.kkt_tolerance and viol <= o.constraint_tolerance:
            nu = nu_qp
            status = CONVERGED
            it -= 1
            break

        nu_norm = float(np.max(np.abs(nu_qp), initial=0.0))
        if rho < nu_norm * 1.01:
            rho = max(o.merit_penalty_growth * rho, nu_norm * 1.01 + 1e-3)
        c_norm = float(np.sum(np.abs(c)))
        lin_norm = float(np.sum(np.abs(c + J @ d)))
        slope = float(g @ d) + rho * (lin_norm - c_norm)
        merit0 = f + rho * c_norm

        step = 1.0
        accepted = False
        hit_nonfinite = False
        while step >= o.min_step:
            xt = np.clip(x + step * d, lo, hi)
            try:
                ft, ct = ev.values(xt)
            except FloatingPointError:
                ft, ct = math.nan, c
            if not _finite(ft, ct):
                hit_nonfinite = True
            else:
                merit_t = ft + rho * float(np.sum(np.abs(ct)))
                if merit_t <= merit0 + o.armijo * step * min(slope, 0.0):
                    accepted = True
                    break
            step *= o.backtrack

        if not accepted:
            if hit_nonfinite:
                status = INFEASIBLE_STEP
                break
            if identity_retry:
                status = STALLED
                break
            # curvature model is useless along d: restart from a scaled identity
            identity_retry = True
            B = np.eye(n) * max(1e-8, float(np.mean(np.abs(np.diag(B)))))
            trace.append(dict(iteration=it, objective=f, kkt=kkt, violation=viol, step=0.0,
                              merit_before=merit0, merit_after=merit0, penalty=rho))
            continue
        identity_retry = False

        try:
            g_new, J_new = ev.derivatives(xt, m)
        except FloatingPointError:
            status = INFEASIBLE_STEP
            break
        if not _finite(g_new, J_new):
            status = INFEASIBLE_STEP
            break

        s = xt - x
        y = (g_new + J_new.T @ nu_qp) - (g + J.T @ nu_qp)
        B = _damped_bfgs(B, s, y, o.bfgs_damping, scale_pending)
        scale_pending = False

        trace.append(dict(iteration=it, objective=ft, kkt=kkt, violation=viol, step=step,
                          merit_before=merit0, merit_after=merit_t, penalty=rho))
        x, f, c, g, J, nu = xt, ft, ct, g_new, J_new, nu_qp
        if o.ftol > 0:
            small = abs(merit0 - merit_t) <= o.ftol * (1.0 + abs(merit0))
            feasible = float(np.max(np.abs(c), initial=0.0)) <= o.constraint_tolerance
            flat = flat + 1 if small and feasible else 0
            if flat >= o.ftol_streak:
                status = CONVERGED
                break

    viol = float(np.max(np.abs(c), initial=0.0))
    kkt = _kkt_residual(x, g, J, nu, lo, hi)
    return SolveResult(x, f, status, it, kkt, viol, nu, B, trace)


def _damped_bfgs(B, s, y, damping, rescale):
    ss = float(s @ s)
    if ss == 0.0:
        return B
    sy = float(s @ y)
    if rescale and sy > 0:
        B = np.eye(s.size) * (float(y @ y) / sy)
    Bs = B @ s
    sBs = float(s @ Bs)
    if sBs <= 0 or not math.isfinite(sBs):
        return np.eye(s.size)
    if sy >= damping * sBs:
        r = y
    else:
        theta = (1.0 - damping) * sBs / (sBs - sy)
        r = theta * y + (1.0 - theta) * Bs
    sr = float(s @ r)
    if sr <= 1e-300:
        return np.eye(s.size)
    B_new = B - np.outer(Bs, Bs) / sBs + np.outer(r, r) / sr
    if not _finite(B_new):
        return np.eye(s.size)
    return 0.5 * (B_new + B_new.T)
