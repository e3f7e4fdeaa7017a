"""Offline energy-optimal trajectory by direct collocation.

Whole-mission transcription used as a benchmark for the receding-horizon
controllers: states and thrusts at every node are decision variables, the
dynamics enter as trapezoidal defects between consecutive nodes, and each
leg has its own free duration ending on the boundary of its waypoint's COA.
Only small instances (a leg or two, a few dozen nodes) are practical with the
dense SQP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .disturbance import DisturbanceSpec
from .nlp import NlpProblem, SolveOptions, solve
from .path import make_path, update_active
from .vessel import VesselParams, VesselState, derivative_batch

NX, NU = 6, 2


@dataclass
class OracleResult:
    times: np.ndarray          # (M+1,)
    states: np.ndarray         # (M+1, 6)
    thrusts: np.ndarray        # (M+1, 2)
    leg_durations: np.ndarray  # (L,)
    energy_J: float
    status: str
    iterations: int
    max_defect: float

    @property
    def feasible(self) -> bool:
        return self.status == "converged"

    @property
    def travel_time_s(self) -> float:
        return float(self.times[-1]) if self.times.size else 0.0


def _state_jacobians(X, U, p: VesselParams):
    """Per-node ``df/dX`` (N x 6 x 6) and ``df/dU`` (N x 6 x 2)."""
    u, v, r, psi = X[:, 0], X[:, 1], X[:, 2], X[:, 5]
    c, s = np.cos(psi), np.sin(psi)
    n = X.shape[0]
    A = np.zeros((n, NX, NX))
    A[:, 0, 0] = -p.Xu / p.m11
    A[:, 0, 1] = p.m22 * r / p.m11
    A[:, 0, 2] = p.m22 * v / p.m11
    A[:, 1, 0] = -p.m11 * r / p.m22
    A[:, 1, 1] = -p.Yv / p.m22
    A[:, 1, 2] = -p.m11 * u / p.m22
    A[:, 2, 0] = -(p.m22 - p.m11) * v / p.m33
    A[:, 2, 1] = -(p.m22 - p.m11) * u / p.m33
    A[:, 2, 2] = -p.Nr / p.m33
    A[:, 3, 0], A[:, 3, 1], A[:, 3, 5] = c, -s, -s * u - c * v
    A[:, 4, 0], A[:, 4, 1], A[:, 4, 5] = s, c, c * u - s * v
    A[:, 5, 2] = 1.0
    B = np.zeros((n, NX, NU))
    B[:, 0, :] = 1.0 / p.m11
    B[:, 2, 0] = p.l / p.m33
    B[:, 2, 1] = -p.l / p.m33
    return A, B


class _Transcription:
    def __init__(self, params, x0, targets, r_coa, nodes_per_leg, wrench):
        self.p = params
        self.x0 = np.asarray(x0, dtype=float)
        self.targets = np.asarray(targets, dtype=float)
        self.r = float(r_coa)
        self.L = len(targets)
        self.N = int(nodes_per_leg)
        self.M = self.L * self.N
        self.wrench = np.asarray(wrench, dtype=float)
        self.nx = (self.M + 1) * NX
        self.nu = (self.M + 1) * NU
        self.dim = self.nx + self.nu + self.L
        # leg of each interval
        self.leg = np.repeat(np.arange(self.L), self.N)

    def unpack(self, z):
        X = z[:self.nx].reshape(self.M + 1, NX)
        U = z[self.nx:self.nx + self.nu].reshape(self.M + 1, NU)
        tf = z[self.nx + self.nu:]
        return X, U, tf

    def pack(self, X, U, tf):
        return np.concatenate([X.ravel(), U.ravel(), np.asarray(tf, dtype=float)])

    def _f(self, X, U):
        W = np.broadcast_to(self.wrench, (X.shape[0], 3))
        return derivative_batch(X, U, W, self.p)

    def _power(self, U):
        return self.p.alpha * np.sum(U * U, axis=1) + self.p.T_w

    def steps(self, tf):
        return tf[self.leg] / self.N

    def objective(self, z):
        X, U, tf = self.unpack(z)
        P = self._power(U)
        return float(np.sum(0.5 * self.steps(tf) * (P[:-1] + P[1:])))

    def gradient(self, z):
        X, U, tf = self.unpack(z)
        P = self._power(U)
        h = self.steps(tf)
        g = np.zeros(self.dim)
        w = np.zeros(self.M + 1)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
        gU = 2.0 * self.p.alpha * U * w[:, None]
        g[self.nx:self.nx + self.nu] = gU.ravel()
        seg = 0.5 * (P[:-1] + P[1:]) / self.N
        g[self.nx + self.nu:] = np.bincount(self.leg, weights=seg, minlength=self.L)
        return g

    def constraints(self, z):
        X, U, tf = self.unpack(z)
        F = self._f(X, U)
        h = self.steps(tf)[:, None]
        D = X[1:] - X[:-1] - 0.5 * h * (F[:-1] + F[1:])
        ends = self.N * np.arange(1, self.L + 1)
        dist = np.hypot(X[ends, 3] - self.targets[:, 0], X[ends, 4] - self.targets[:, 1])
        return np.concatenate([D.ravel(), dist - self.r])

    def jacobian(self, z):
        X, U, tf = self.unpack(z)
        F = self._f(X, U)
        A, B = _state_jacobians(X, U, self.p)
        h = self.steps(tf)
        M, N = self.M, self.N
        J = np.zeros((M * NX + self.L, self.dim))
        eye = np.eye(NX)
        for k in range(M):
            rows = slice(k * NX, (k + 1) * NX)
            J[rows, k * NX:(k + 1) * NX] = -eye - 0.5 * h[k] * A[k]
            J[rows, (k + 1) * NX:(k + 2) * NX] = eye - 0.5 * h[k] * A[k + 1]
            cu = self.nx + k * NU
            J[rows, cu:cu + NU] = -0.5 * h[k] * B[k]
            J[rows, cu + NU:cu + 2 * NU] = -0.5 * h[k] * B[k + 1]
            J[rows, self.nx + self.nu + self.leg[k]] = -0.5 * (F[k] + F[k + 1]) / N
        for j in range(self.L):
            e = N * (j + 1)
            dx = X[e, 3] - self.targets[j, 0]
            dy = X[e, 4] - self.targets[j, 1]
            d = max(math.hypot(dx, dy), 1e-12)
            J[M * NX + j, e * NX + 3] = dx / d
            J[M * NX + j, e * NX + 4] = dy / d
        return J

    def initial_guess(self, speed):
        """Straight-line legs from the start to each COA boundary at constant ``speed``."""
        pts = [self.x0[3:5]]
        for tgt in self.targets:
            prev = pts[-1]
            delta = tgt - prev
            d = np.hypot(*delta)
            pts.append(tgt - delta / d * self.r if d > self.r else prev.copy())
        X = np.zeros((self.M + 1, NX))
        tf = np.zeros(self.L)
        X[0] = self.x0
        for j in range(self.L):
            a, b = pts[j], pts[j + 1]
            length = max(float(np.hypot(*(b - a))), 1e-3)
            tf[j] = length / speed
            heading = math.atan2(b[1] - a[1], b[0] - a[0])
            for i in range(1, self.N + 1):
                k = j * self.N + i
                X[k, 3:5] = a + (b - a) * i / self.N
                X[k, 0] = speed
                X[k, 5] = heading
        # unwrap headings relative to the initial one
        X[1:, 5] = self.x0[5] + np.vectorize(_wrap)(X[1:, 5] - self.x0[5])
        U = np.full((self.M + 1, NU), self.p.Xu * speed / 2.0)
        return self.pack(X, U, tf)


def _wrap(a):
    return a - 2.0 * math.pi * math.ceil((a - math.pi) / (2.0 * math.pi))


def oracle_options() -> SolveOptions:
    return SolveOptions(max_iterations=400, kkt_tolerance=1e-6, constraint_tolerance=1e-8)


def collocation_oracle(params: VesselParams, initial_state: VesselState, waypoints, r_coa: float = 1.0,
                       nodes: int = 40, disturbance: Optional[DisturbanceSpec] = None,
                       speed_guess: Optional[float] = None,
                       options: Optional[SolveOptions] = None) -> OracleResult:
    """Energy-optimal open-loop trajectory from ``initial_state`` through the COAs of ``waypoints``.

    ``nodes`` is the total number of collocation intervals, shared evenly
    between legs. Only disturbance-free or constant body-frame disturbances
    are supported. A mission whose waypoints are all reached at the start
    returns an empty trajectory with zero energy.
    """
    if nodes < 2:
        raise ValueError("need at least two collocation intervals")
    if nodes > 200:
        raise ValueError("the dense oracle is limited to 200 collocation intervals")
    spec = disturbance or DisturbanceSpec()
    if spec.kind == "none":
        wrench = np.zeros(3)
    elif spec.kind == "constant_body":
        wrench = np.array([spec.values[0], spec.values[1], 0.0])
    else:
        raise ValueError(f"oracle supports 'none' and 'constant_body' disturbances, not {spec.kind!r}")

    x0 = np.asarray(initial_state, dtype=float)
    path = make_path(waypoints, (x0[3], x0[4]), r_coa)
    while True:
        nxt = update_active(path, (x0[3], x0[4]))
        if nxt is path:
            break
        path = nxt
    remaining = path.waypoints[path.active_index:]
    if not remaining:
        return OracleResult(np.zeros(1), x0[None, :].copy(), np.zeros((1, 2)), np.zeros(0),
                            0.0, "converged", 0, 0.0)

    L = len(remaining)
    per_leg = max(2, nodes // L)
    tr = _Transcription(params, x0, remaining, r_coa, per_leg, wrench)
    u_guess = speed_guess if speed_guess is not None else (params.cruise_speed or 0.5 * params.max_speed)

    lo = np.full(tr.dim, -np.inf)
    hi = np.full(tr.dim, np.inf)
    lo[:NX] = hi[:NX] = x0
    lo[tr.nx:tr.nx + tr.nu] = -params.T_max
    hi[tr.nx:tr.nx + tr.nu] = params.T_max
    lo[tr.nx + tr.nu:] = 1e-3
    hi[tr.nx + tr.nu:] = 1e6

    problem = NlpProblem(dim=tr.dim, objective=tr.objective, lower=lo, upper=hi,
                         eq_constraints=tr.constraints, gradient=tr.gradient, jacobian=tr.jacobian)
    res = solve(problem, tr.initial_guess(u_guess), options or oracle_options())
    X, U, tf = tr.unpack(res.x)
    times = np.concatenate([[0.0], np.cumsum(tr.steps(tf))])
    defect = float(np.max(np.abs(tr.constraints(res.x)), initial=0.0))
    return OracleResult(times, X.copy(), U.copy(), tf.copy(), tr.objective(res.x), res.status,
                        res.iterations, defect)
