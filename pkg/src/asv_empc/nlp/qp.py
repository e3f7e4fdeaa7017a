"""Dense convex QP with linear equalities and box bounds.

    min 0.5 d'Bd + g'd   s.t.  A d = b,  lo <= d <= hi

Solved by a primal-dual active-set iteration on the bounds; each iteration
is one equality-constrained solve over the free variables. ``B`` must be
positive definite on the null space of the free-variable constraint block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class QPSolution:
    d: np.ndarray
    nu: np.ndarray            # equality multipliers, stationarity B d + g + A'nu - z = 0
    z: np.ndarray             # bound multipliers, >= 0 at lower bounds, <= 0 at upper bounds
    at_lower: np.ndarray
    at_upper: np.ndarray
    iterations: int
    converged: bool


def _eqp(B, g, A, b, d, free):
    nf = int(free.sum())
    m = A.shape[0]
    fixed = ~free
    rhs_x = -g[free] - B[np.ix_(free, fixed)] @ d[fixed]
    rhs_c = b - A[:, fixed] @ d[fixed]
    K = np.zeros((nf + m, nf + m))
    K[:nf, :nf] = B[np.ix_(free, free)]
    K[:nf, nf:] = A[:, free].T
    K[nf:, :nf] = A[:, free]
    rhs = np.concatenate([rhs_x, rhs_c])
    try:
        sol = np.linalg.solve(K, rhs)
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    out = d.copy()
    out[free] = sol[:nf]
    return out, sol[nf:]


def _eq_ok(A, b, d):
    return A.shape[0] == 0 or float(np.max(np.abs(A @ d - b))) <= 1e-9 * (1.0 + float(np.max(np.abs(b))))


def solve_qp(B, g, A, b, lo, hi, at_lower=None, at_upper=None, max_iter: int = 100) -> QPSolution:
    n = g.size
    A = np.zeros((0, n)) if A is None else np.atleast_2d(A)
    b = np.zeros(0) if b is None else np.atleast_1d(b)
    if at_lower is None:
        at_lower = np.zeros(n, dtype=bool)
    if at_upper is None:
        at_upper = np.zeros(n, dtype=bool)
    at_lower = at_lower.copy()
    at_upper = at_upper.copy() & ~at_lower
    pinned = lo >= hi
    seen = set()
    d = np.zeros(n)
    nu = np.zeros(A.shape[0])
    z = np.zeros(n)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        at_lower |= pinned
        at_upper &= ~pinned
        d = np.zeros(n)
        d[at_lower] = lo[at_lower]
        d[at_upper] = hi[at_upper]
        free = ~(at_lower | at_upper)
        d, nu = _eqp(B, g, A, b, d, free)
        z = B @ d + g + A.T @ nu
        z[free] = 0.0

        new_lower = (free & (d < lo)) | (at_lower & (z > 0)) | pinned
        new_upper = ((free & (d > hi)) | (at_upper & (z < 0))) & ~new_lower
        if np.array_equal(new_lower, at_lower) and np.array_equal(new_upper, at_upper):
            # a rank-deficient free block can leave the equalities unsatisfied
            converged = _eq_ok(A, b, d)
            break
        key = (new_lower.tobytes(), new_upper.tobytes())
        if key in seen:
            # cycling: fall back to one change at a time, worst violation first
            new_lower, new_upper = at_lower.copy(), at_upper.copy()
            viol = np.zeros(n)
            viol[free] = np.maximum(lo[free] - d[free], d[free] - hi[free])
            viol[at_lower] = -z[at_lower]
            viol[at_upper] = z[at_upper]
            j = int(np.argmax(viol))
            if viol[j] <= 0:
                converged = _eq_ok(A, b, d)
                break
            if free[j]:
                if d[j] < lo[j]:
                    new_lower[j] = True
                else:
                    new_upper[j] = True
            else:
                new_lower[j] = new_upper[j] = False
        seen.add(key)
        at_lower, at_upper = new_lower, new_upper

    if not converged:
        fallback = _primal_active_set(B, g, A, b, lo, hi, max_iter=max(max_iter, 4 * n + 20))
        if fallback is not None:
            return fallback
    d = np.clip(d, lo, hi)
    return QPSolution(d, nu, z, at_lower, at_upper, it, converged)


def _feasible_point(A, b, lo, hi, iterations=5000, tol=1e-10):
    """Dykstra projections onto ``{A d = b}`` and the box; ``None`` if they do not meet."""
    n = lo.size
    x = np.clip(np.zeros(n), lo, hi)
    if A.shape[0] == 0:
        return x
    pinv = np.linalg.pinv(A)
    p = np.zeros(n)
    q = np.zeros(n)
    for _ in range(iterations):
        y = x + p
        y_aff = y - pinv @ (A @ y - b)
        p = y - y_aff
        w = y_aff + q
        x = np.clip(w, lo, hi)
        q = w - x
        if np.max(np.abs(A @ x - b)) <= tol * (1.0 + np.max(np.abs(b))):
            return x
    return None


def _primal_active_set(B, g, A, b, lo, hi, max_iter):
    """Primal active-set method on the bounds from a feasible start; used when PDAS cycles."""
    n = g.size
    d = _feasible_point(A, b, lo, hi)
    if d is None:
        return None
    at_lower = lo >= hi
    at_upper = np.zeros(n, dtype=bool)
    # greedy working set of active bounds that keeps the equality block full rank
    rank = np.linalg.matrix_rank(A) if A.shape[0] else 0
    for i in np.flatnonzero(((d <= lo) | (d >= hi)) & (lo < hi)):
        free = ~(at_lower | at_upper)
        free[i] = False
        if rank == 0 or (free.any() and np.linalg.matrix_rank(A[:, free]) == rank):
            if d[i] <= lo[i]:
                at_lower[i] = True
            else:
                at_upper[i] = True
    nu = np.zeros(A.shape[0])
    z = np.zeros(n)
    for it in range(1, max_iter + 1):
        free = ~(at_lower | at_upper)
        target, nu = _eqp(B, g, A, b, d, free)
        step = target - d
        if np.max(np.abs(step), initial=0.0) <= 1e-14 * (1.0 + np.max(np.abs(d), initial=0.0)):
            z = B @ d + g + A.T @ nu
            z[free] = 0.0
            wrong = np.where(at_lower & (lo < hi), -z, 0.0) + np.where(at_upper, z, 0.0)
            j = int(np.argmax(wrong))
            if wrong[j] <= 1e-12:
                return QPSolution(np.clip(d, lo, hi), nu, z, at_lower, at_upper, it, True)
            at_lower[j] = at_upper[j] = False
            continue
        alpha, block, to_lower = 1.0, -1, False
        for i in np.flatnonzero(free & (step != 0.0)):
            bound = lo[i] if step[i] < 0 else hi[i]
            a = (bound - d[i]) / step[i]
            if a < alpha:
                alpha, block, to_lower = max(a, 0.0), i, step[i] < 0
        d = d + alpha * step
        if block >= 0:
            if to_lower:
                d[block], at_lower[block] = lo[block], True
            else:
                d[block], at_upper[block] = hi[block], True
    return None
