"""Fast invariant checks behind ``asv-empc selftest``."""

from __future__ import annotations

import math
import tempfile
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from . import disturbance as dist
from .nlp import NlpProblem, SolveOptions, solve
from .nlp.qp import solve_qp
from .terminal import SINC_SEAM, build_yaw_profile, sinc
from .vessel import (ZERO_WRENCH, ThrustCmd, VesselState, coriolis_matrix, derivative_batch, preset,
                     step_discrete)


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def _random_states(rng, n):
    lo = np.array([-2.0, -1.0, -1.0, -50.0, -50.0, -math.pi])
    return lo + (-2.0 * lo) * rng.random((n, 6))


def check_passivity(rng) -> CheckResult:
    """Unforced kinetic energy never grows: Coriolis terms do no work, damping dissipates."""
    p = preset("sim")
    X = _random_states(rng, 10_000)
    F = derivative_batch(X, np.zeros((len(X), 2)), np.zeros((len(X), 3)), p)
    dke = p.m11 * X[:, 0] * F[:, 0] + p.m22 * X[:, 1] * F[:, 1] + p.m33 * X[:, 2] * F[:, 2]
    damping = p.Xu * X[:, 0] ** 2 + p.Yv * X[:, 1] ** 2 + p.Nr * X[:, 2] ** 2
    gap = float(np.max(np.abs(dke + damping)))
    return CheckResult("passivity", bool(np.all(dke <= 1e-12) and gap < 1e-9), f"max |dKE + D| = {gap:.2e}")


def check_skew(rng) -> CheckResult:
    p = preset("sim")
    worst = 0.0
    for u, v in rng.uniform(-3.0, 3.0, size=(10_000, 2)):
        C = coriolis_matrix(u, v, p)
        worst = max(worst, float(np.max(np.abs(C + C.T))))
    return CheckResult("coriolis skew-symmetry", worst == 0.0, f"max |C + C^T| = {worst:.1e}")


def check_rk4_order(rng) -> CheckResult:
    p = preset("sim")
    s0 = VesselState(0.3, 0.05, 0.2, 0.0, 0.0, 0.1)
    cmd = ThrustCmd(3.0, 1.0)

    def endpoint(h, horizon=2.0):
        s = s0
        for _ in range(int(round(horizon / h))):
            s = step_discrete(s, cmd, ZERO_WRENCH, h, p)
        return np.asarray(s)

    ref = endpoint(0.0125)
    e1 = np.max(np.abs(endpoint(0.2) - ref))
    e2 = np.max(np.abs(endpoint(0.1) - ref))
    order = math.log2(e1 / e2)
    return CheckResult("rk4 order", 3.5 < order < 4.5, f"observed order {order:.2f}")


def check_yaw_area(rng) -> CheckResult:
    worst = 0.0
    for _ in range(1000):
        r_h, psi_d = rng.uniform(-0.5, 0.5), rng.uniform(-math.pi, math.pi)
        t_d, n = rng.uniform(0.1, 60.0), rng.uniform(1.1, 8.0)
        worst = max(worst, abs(build_yaw_profile(r_h, psi_d, t_d, n).area() - psi_d))
    return CheckResult("yaw profile area", worst <= 1e-9, f"max |area - psi_d| = {worst:.1e}")


def check_sinc_seam(rng) -> CheckResult:
    below = sinc(np.nextafter(SINC_SEAM, 0.0))
    above = sinc(SINC_SEAM)
    jump = abs(above - below)
    return CheckResult("sinc seam", bool(jump <= 1e-10), f"jump {jump:.1e}")


def check_qp_oracle(rng) -> CheckResult:
    worst = 0.0
    for _ in range(20):
        n, m = rng.integers(3, 9), rng.integers(1, 3)
        L = rng.normal(size=(n, n))
        B = L @ L.T + n * np.eye(n)
        g, A, b = rng.normal(size=n), rng.normal(size=(m, n)), rng.normal(size=m)
        K = np.block([[B, A.T], [A, np.zeros((m, m))]])
        ref = np.linalg.solve(K, np.concatenate([-g, b]))[:n]
        big = np.full(n, 1e9)
        qp = solve_qp(B, g, A, b, -big, big)
        worst = max(worst, float(np.max(np.abs(qp.d - ref))))
    return CheckResult("qp vs kkt solve", worst <= 1e-8, f"max deviation {worst:.1e}")


def check_rosenbrock(rng) -> CheckResult:
    prob = NlpProblem(dim=2, objective=lambda x: (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2,
                      lower=-np.inf, upper=np.inf,
                      gradient=lambda x: np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2),
                                                   200 * (x[1] - x[0] ** 2)]))
    res = solve(prob, [-1.2, 1.0], SolveOptions(max_iterations=200, kkt_tolerance=1e-10))
    err = float(np.max(np.abs(res.x - 1.0)))
    return CheckResult("rosenbrock", err <= 1e-5, f"{res.iterations} iterations, error {err:.1e}")


def check_grid_knots(rng) -> CheckResult:
    g = dist.synthetic_grid()
    worst = 0.0
    for i, x in enumerate(g.xs):
        for j, y in enumerate(g.ys):
            tx, ty = g.interpolate(x, y)
            worst = max(worst, abs(tx - g.taux[i, j]), abs(ty - g.tauy[i, j]))
    return CheckResult("grid knots", worst <= 1e-12, f"max knot error {worst:.1e}")


def check_roundtrip(rng) -> CheckResult:
    from .controllers import ControllerConfig
    from .sim import compute_metrics, default_scenario, export_trajectory, import_trajectory, run_closed_loop

    sc = default_scenario(2).replace(max_time=2.0)
    log_, metrics = run_closed_loop(sc, ControllerConfig(variant="eo_empc"))
    with tempfile.TemporaryDirectory() as tmp:
        f = Path(tmp) / "traj.csv"
        export_trajectory(log_, f)
        back = import_trajectory(f)
    same_rows = np.array_equal(back.array(), log_.array())
    again = compute_metrics(back, sc.path())
    same = same_rows and again.energy_J == metrics.energy_J and again.avg_cross_track_m == metrics.avg_cross_track_m
    return CheckResult("csv round trip", bool(same), f"{len(log_)} rows")


CHECKS: tuple[Callable[[np.random.Generator], CheckResult], ...] = (
    check_passivity, check_skew, check_rk4_order, check_yaw_area, check_sinc_seam,
    check_qp_oracle, check_rosenbrock, check_grid_knots, check_roundtrip,
)


def run_selftest(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    for check in CHECKS:
        try:
            out.append(check(rng))
        except Exception as exc:  # a crash is a failed check, not a crashed selftest
            out.append(CheckResult(check.__name__.removeprefix("check_"), False, f"raised {exc!r}"))
    return out
