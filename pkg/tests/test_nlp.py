import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asv_empc.nlp import (CONVERGED, INFEASIBLE_STEP, HorizonLayout, NlpProblem, SolveOptions, gradient_fd,
                          jacobian_fd, solve, solve_qp, warm_start_shift, write_trace_csv)


def random_qp(rng, n, m):
    L = rng.normal(size=(n, n))
    B = L @ L.T + n * np.eye(n)
    return B, rng.normal(size=n), rng.normal(size=(m, n)), rng.normal(size=m)


def kkt_solve(B, g, A, b):
    n, m = len(g), len(b)
    K = np.block([[B, A.T], [A, np.zeros((m, m))]])
    return np.linalg.solve(K, np.concatenate([-g, b]))[:n]


def enumerate_box_qp(B, g, A, b, lo, hi):
    """Brute-force optimum of a small strictly convex QP by trying every active set."""
    n = len(g)
    best, best_val = None, math.inf
    for pattern in itertools.product((0, 1, 2), repeat=n):  # free, at lower, at upper
        fixed = [i for i in range(n) if pattern[i]]
        free = [i for i in range(n) if not pattern[i]]
        d = np.zeros(n)
        for i in fixed:
            d[i] = lo[i] if pattern[i] == 1 else hi[i]
        if free:
            Bf = B[np.ix_(free, free)]
            gf = g[free] + B[np.ix_(free, fixed)] @ d[fixed]
            Af = A[:, free]
            bf = b - A[:, fixed] @ d[fixed]
            if Af.shape[0] and np.linalg.matrix_rank(Af) < Af.shape[0]:
                continue
            d[free] = kkt_solve(Bf, gf, Af, bf)
        elif np.max(np.abs(A @ d - b), initial=0) > 1e-9:
            continue
        if np.any(d < lo - 1e-9) or np.any(d > hi + 1e-9) or np.max(np.abs(A @ d - b), initial=0) > 1e-9:
            continue
        val = 0.5 * d @ B @ d + g @ d
        if val < best_val:
            best, best_val = d, val
    return best


def test_qp_equality_only_matches_kkt(rng):
    for _ in range(20):
        B, g, A, b = random_qp(rng, rng.integers(3, 9), rng.integers(1, 3))
        big = np.full(len(g), 1e9)
        qp = solve_qp(B, g, A, b, -big, big)
        np.testing.assert_allclose(qp.d, kkt_solve(B, g, A, b), atol=1e-9)
        assert qp.converged


def test_qp_bounds_match_enumeration():
    # includes near-degenerate instances where the feasible set shrinks to a vertex
    rng = np.random.default_rng(1)
    checked = 0
    for _ in range(600):
        n, m = rng.integers(2, 6), rng.integers(0, 3)
        B, g, A, b = random_qp(rng, n, m)
        g *= rng.uniform(1, 8)
        lo, hi = -rng.uniform(0.05, 1.0, n), rng.uniform(0.05, 1.0, n)
        ref = enumerate_box_qp(B, g, A, b, lo, hi)
        if ref is None:
            continue
        qp = solve_qp(B, g, A, b, lo, hi)
        np.testing.assert_allclose(qp.d, ref, atol=1e-8)
        # dual signs: lower-bound multipliers non-negative, upper non-positive
        assert np.all(qp.z[qp.at_lower] >= -1e-10) and np.all(qp.z[qp.at_upper] <= 1e-10)
        np.testing.assert_allclose(B @ qp.d + g + A.T @ qp.nu - qp.z, 0.0, atol=1e-8)
        checked += 1
    assert checked >= 300


def test_bounded_scalar_example():
    # min (x - 1)^2 on [-inf, 0.5]
    prob = NlpProblem(dim=1, objective=lambda x: (x[0] - 1.0) ** 2, lower=-np.inf, upper=0.5)
    res = solve(prob, [0.0])
    assert res.status == CONVERGED
    assert res.x[0] == 0.5


def test_equality_example():
    prob = NlpProblem(dim=2, objective=lambda x: x @ x, lower=-np.inf, upper=np.inf,
                      eq_constraints=lambda x: np.array([x[0] + x[1] - 1.0]))
    res = solve(prob, [3.0, -1.0])
    assert res.converged
    np.testing.assert_allclose(res.x, [0.5, 0.5], atol=1e-7)
    assert res.multipliers[0] == pytest.approx(-1.0, abs=1e-6)


def test_sqp_reproduces_kkt_oracle(rng):
    for _ in range(20):
        B, g, A, b = random_qp(rng, rng.integers(3, 9), rng.integers(1, 3))
        prob = NlpProblem(dim=len(g), objective=lambda x: 0.5 * x @ B @ x + g @ x, lower=-np.inf, upper=np.inf,
                          eq_constraints=lambda x: A @ x - b, gradient=lambda x: B @ x + g,
                          jacobian=lambda x: A)
        res = solve(prob, np.zeros(len(g)), SolveOptions(kkt_tolerance=1e-12, constraint_tolerance=1e-12))
        np.testing.assert_allclose(res.x, kkt_solve(B, g, A, b), atol=1e-8)


def rosenbrock_problem():
    return NlpProblem(dim=2, objective=lambda x: (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2,
                      lower=-np.inf, upper=np.inf,
                      gradient=lambda x: np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2),
                                                   200 * (x[1] - x[0] ** 2)]))


def test_rosenbrock():
    res = solve(rosenbrock_problem(), [-1.2, 1.0], SolveOptions(max_iterations=200, kkt_tolerance=1e-10))
    assert res.converged and res.iterations <= 200
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-5)


def test_merit_never_increases_and_trace_csv(tmp_path):
    res = solve(rosenbrock_problem(), [-1.2, 1.0], SolveOptions(max_iterations=200, kkt_tolerance=1e-10))
    assert res.trace
    for row in res.trace:
        assert row["merit_after"] <= row["merit_before"] + 1e-12
    out = tmp_path / "trace.csv"
    write_trace_csv(res, out)
    lines = out.read_text().splitlines()
    assert lines[0].startswith("iteration,objective,kkt")
    assert len(lines) == len(res.trace) + 1


def test_deterministic():
    a = solve(rosenbrock_problem(), [-1.2, 1.0])
    b = solve(rosenbrock_problem(), [-1.2, 1.0])
    assert np.array_equal(a.x, b.x) and a.iterations == b.iterations


def test_bounds_hold_exactly(rng):
    for _ in range(10):
        c = rng.normal(size=5) * 5
        lo, hi = -np.ones(5), np.ones(5)
        prob = NlpProblem(dim=5, objective=lambda x: np.sum((x - c) ** 2) + np.sum(x ** 4), lower=lo, upper=hi)
        res = solve(prob, rng.uniform(-3, 3, 5))
        assert np.all(res.x >= lo) and np.all(res.x <= hi)
        outside = np.abs(c) > 3
        assert np.all(np.abs(res.x[outside]) == 1.0)


def test_nonfinite_objective_reports_infeasible_step():
    # every trial point along the descent direction evaluates to NaN
    prob = NlpProblem(dim=1, objective=lambda x: -x[0] if x[0] <= 1.0 else math.nan, lower=-10, upper=10,
                      gradient=lambda x: np.array([-1.0]))
    res = solve(prob, [1.0])
    assert res.status == INFEASIBLE_STEP


def test_hessian_seed_speeds_up_resolve():
    prob = rosenbrock_problem()
    cold = solve(prob, [-1.2, 1.0], SolveOptions(max_iterations=200, kkt_tolerance=1e-10))
    warm = solve(prob, cold.x + 1e-3, SolveOptions(max_iterations=200, kkt_tolerance=1e-10), hessian=cold.hessian)
    assert warm.iterations < cold.iterations


def test_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(max_iterations=0)
    with pytest.raises(ValueError):
        SolveOptions(backtrack=1.0)
    with pytest.raises(ValueError):
        NlpProblem(dim=2, objective=sum, lower=[1, 1], upper=[0, 2])


def test_fd_examples():
    g = gradient_fd(lambda x: x[0] ** 2 + 3 * x[1], np.array([2.0, -1.0]))
    np.testing.assert_allclose(g, [4.0, 3.0], rtol=1e-8)
    J = jacobian_fd(lambda x: np.array([x[0] * x[1], math.sin(x[0])]), np.array([0.3, 2.0]))
    np.testing.assert_allclose(J, [[2.0, 0.3], [math.cos(0.3), 0.0]], atol=1e-8)
    with pytest.raises(FloatingPointError):
        gradient_fd(lambda x: 1 / x[0] if x[0] > 0 else math.inf, np.array([1e-7]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6), st.floats(-3, 3))
def test_fd_exact_on_quadratics(coeffs, shift):
    a = np.array(coeffs)
    x = np.linspace(-1, 1, a.size) + shift
    g = gradient_fd(lambda y: float(np.sum(a * y * y)), x)
    np.testing.assert_allclose(g, 2 * a * x, atol=1e-6 * (1 + np.abs(x).max()) ** 2 * (1 + np.abs(a).max()))


def test_warm_start_shift_example():
    layout = HorizonLayout(3, True, 0.1)
    prev = np.array([1, 2, 3, 4, 5, 6, 2.0, 10.0])
    np.testing.assert_allclose(warm_start_shift(prev, layout), [3, 4, 5, 6, 5, 6, 2.0, 9.9])
    assert warm_start_shift(np.array([1, 2, 3, 4, 5, 6, 2.0, 0.05]), layout)[-1] == 0.0


def test_warm_start_tracking_layout():
    layout = HorizonLayout(2, False, 0.1)
    np.testing.assert_allclose(warm_start_shift([1, 2, 3, 4], layout), [3, 4, 3, 4])
    with pytest.raises(ValueError):
        warm_start_shift([1, 2, 3], layout)
