import math

import numpy as np
import pytest

from asv_empc.controllers import (Controller, ControllerConfig, HorizonDecision, cc_empc_step, empc_bounds,
                                  empc_step, eo_empc_step, nmpc_reference, nmpc_step)
from asv_empc import controllers
from asv_empc.nlp import INFEASIBLE_STEP, SolveResult
from asv_empc.path import PathState, make_path
from asv_empc.vessel import ZERO_WRENCH, VesselState, step_discrete

STRAIGHT = make_path([(100.0, 0.0)], (0.0, 0.0))


def cruising(params, x=5.0):
    return VesselState(params.cruise_speed, 0.0, 0.0, x, 0.0, 0.0)


def test_config_defaults_and_validation():
    assert ControllerConfig(variant="cc_empc").y_weight == 1.0
    assert ControllerConfig(variant="eo_empc").y_weight == 0.0
    assert ControllerConfig(dt=0.2).t_d_min == 0.2
    for bad in (dict(variant="pid"), dict(horizon=1), dict(dt=0.0), dict(n=1.0), dict(y_weight=-1),
                dict(u_ref=0.0), dict(q_diag=(1, 1, 1)), dict(r_diag=(-1, 0))):
        with pytest.raises(ValueError):
            ControllerConfig(**bad)


def test_config_from_dict():
    cfg = ControllerConfig.from_dict({"variant": "nmpc", "horizon": 8, "solver": {"max_iterations": 7}})
    assert cfg.horizon == 8 and cfg.solver.max_iterations == 7 and cfg.solver.kkt_tolerance == 1e-4
    with pytest.raises(ValueError, match="unknown controller option"):
        ControllerConfig.from_dict({"variant": "cc_empc", "horizon_steps": 8})


def test_decision_round_trip():
    cfg = ControllerConfig()
    z = np.arange(22, dtype=float)
    dec = HorizonDecision.from_vector(z, cfg.layout)
    assert dec.t_d == 20.0 and dec.t_s == 21.0 and dec.thrusts.shape == (10, 2)
    np.testing.assert_array_equal(dec.as_vector(), z)


def test_cruising_is_symmetric(params):
    cmd, _, diag, _ = empc_step(cruising(params), STRAIGHT, params, ControllerConfig())
    assert diag.status == "converged"
    assert abs(cmd.T1 - cmd.T2) < 0.05 * params.T_max
    assert cmd.T1 + cmd.T2 == pytest.approx(params.Xu * params.cruise_speed, rel=0.02)


def test_target_behind_commands_turn(params):
    path = make_path([(-20.0, 0.5)], (10.0, 0.0))
    cmd, _, _, _ = empc_step(cruising(params), path, params, ControllerConfig())
    assert abs(cmd.T1 - cmd.T2) > 0.05 * params.T_max


def test_target_left_turns_left(params):
    path = make_path([(5.0, 20.0)], (5.0, 0.0))
    cmd, _, _, _ = empc_step(cruising(params), path, params, ControllerConfig())
    assert cmd.T1 > cmd.T2  # positive yaw moment


def test_zero_y_weight_matches_eo_bitwise(params):
    state = VesselState(0.05, 0.002, 0.01, 2.0, 0.7, 0.3)
    path = make_path([(6.0, 0.0), (10.0, 4.0)], (0.0, 0.0))
    a = cc_empc_step(state, path, params, ControllerConfig(variant="cc_empc", y_weight=0.0))
    b = eo_empc_step(state, path, params, ControllerConfig(variant="eo_empc"))
    assert a[0] == b[0]
    np.testing.assert_array_equal(a[1].as_vector(), b[1].as_vector())


def test_eo_ignores_track_error(params):
    path = make_path([(6.0, 0.0), (10.0, 4.0)], (0.0, 0.0))
    for y in (0.5, 1.5, 2.5):
        _, _, diag, _ = eo_empc_step(VesselState(0.05, 0, 0, 2.0, y, 0.0), path, params, ControllerConfig())
        assert diag.breakdown["Y"] == 0.0


def test_breakdown_sums_to_objective(params):
    path = make_path([(6.0, 0.0), (10.0, 4.0)], (0.0, 0.0))
    ctl = Controller(params, ControllerConfig())
    state = VesselState(0.0, 0.0, 0.0, 0.0, 0.3, 0.2)
    for _ in range(10):
        cmd, _, diag = ctl.step(state, path)
        assert sum(diag.breakdown.values()) == pytest.approx(diag.objective, abs=1e-9)
        state = step_discrete(state, cmd, ZERO_WRENCH, 0.1, params)


def test_commands_and_decisions_within_bounds(params):
    path = make_path([(-20.0, 0.5)], (10.0, 0.0))
    for cfg in (ControllerConfig(), ControllerConfig(T_max=4.0), ControllerConfig(variant="nmpc")):
        cmd, dec, _, _ = (nmpc_step if cfg.variant == "nmpc" else empc_step)(cruising(params), path, params, cfg)
        tmax = min(params.T_max, cfg.T_max or params.T_max)
        assert max(abs(cmd.T1), abs(cmd.T2)) <= tmax
        assert np.all(np.abs(dec.thrusts) <= tmax)
        if cfg.variant != "nmpc":
            lo, hi = empc_bounds(params, cfg)
            assert lo[-2] <= dec.t_d <= hi[-2] and 0.0 <= dec.t_s <= hi[-1]


def _straight_leg_iterations(params, steps=50):
    warm = Controller(params, ControllerConfig())
    cold_cfg = ControllerConfig(warm_start=False)
    state = cruising(params, x=1.0)
    warm_it, cold_it, firsts = [], [], []
    for _ in range(steps):
        cmd, _, diag = warm.step(state, STRAIGHT)
        _, _, cold_diag, _ = empc_step(state, STRAIGHT, params, cold_cfg)
        warm_it.append(diag.iterations)
        cold_it.append(cold_diag.iterations)
        firsts.append(cmd)
        state = step_discrete(state, cmd, ZERO_WRENCH, 0.1, params)
    return warm_it, cold_it, firsts


def test_warm_start_halves_iterations(params):
    warm_it, cold_it, _ = _straight_leg_iterations(params)
    assert np.median(warm_it) <= 0.5 * np.median(cold_it)


def test_first_command_consistency(params):
    _, _, firsts = _straight_leg_iterations(params, steps=30)
    jumps = [max(abs(a.T1 - b.T1), abs(a.T2 - b.T2)) for a, b in zip(firsts, firsts[1:])]
    assert max(jumps) <= 0.1 * params.T_max


def test_waypoint_switch_resets_times(params):
    path = make_path([(6.0, 0.0), (10.0, 4.0)], (0.0, 0.0))
    ctl = Controller(params, ControllerConfig())
    ctl.step(VesselState(0.06, 0, 0, 4.0, 0, 0), path)
    assert ctl.hessian is not None
    switched = PathState(path.waypoints, path.start, path.r_coa, active_index=1)
    _, dec, diag = ctl.step(VesselState(0.06, 0, 0, 5.2, 0, 0), switched)
    assert diag.status in ("converged", "max_iter")
    assert dec.t_s > 0


def test_nmpc_reference_geometry():
    cfg = ControllerConfig(variant="nmpc", u_ref=1.0)
    path = make_path([(3.0, 4.0)], (0.0, 0.0))
    ref = nmpc_reference(VesselState(0, 0, 0, 0.0, 0.0, 0.0), path, cfg)
    np.testing.assert_allclose(ref[0, 3:5], [0.06, 0.08])
    assert ref[0, 5] == pytest.approx(math.atan2(4, 3))
    far = nmpc_reference(VesselState(0, 0, 0, 2.9, 3.9, 0.0), path, cfg)
    np.testing.assert_allclose(far[-1, 3:5], [3.0, 4.0])  # held at the waypoint


def test_nmpc_on_reference_needs_only_drag_balance(params):
    # with a negligible input weight the tracking fixed point is the drag-balancing thrust
    cfg = ControllerConfig(variant="nmpc", u_ref=0.5 * params.max_speed, r_diag=(1e-6, 1e-6))
    cmd, _, _, _ = nmpc_step(VesselState(cfg.u_ref, 0, 0, 0, 0, 0), STRAIGHT, params, cfg)
    assert cmd.T1 == pytest.approx(params.Xu * cfg.u_ref / 2, rel=1e-3)
    assert cmd.T2 == pytest.approx(cmd.T1, rel=1e-9)


def test_nmpc_saturates_with_large_offset(params):
    cmd, dec, _, _ = nmpc_step(VesselState(0.1, 0, 0, 0, 8.0, 0), STRAIGHT, params, ControllerConfig(variant="nmpc"))
    assert max(abs(cmd.T1), abs(cmd.T2)) == params.T_max


def test_solver_failure_falls_back_to_warm_start(params, monkeypatch):
    def failing(problem, x0, options=None, hessian=None):
        n = problem.dim
        return SolveResult(np.full(n, np.nan), math.nan, INFEASIBLE_STEP, 1, math.inf, math.inf,
                           np.zeros(1), np.eye(n))

    monkeypatch.setattr(controllers, "solve", failing)
    prev = HorizonDecision(np.arange(20.0).reshape(10, 2) / 4.0, 2.0, 50.0)
    cmd, dec, diag, _ = empc_step(cruising(params), STRAIGHT, params, ControllerConfig(), previous=prev)
    assert diag.fallback and diag.status == INFEASIBLE_STEP
    np.testing.assert_array_equal(dec.thrusts[:-1], prev.thrusts[1:])
    assert dec.t_s == pytest.approx(49.9)
    assert cmd == (prev.thrusts[1, 0], prev.thrusts[1, 1])


def test_complete_mission_rejected(params):
    done = PathState(((1.0, 0.0),), (0.0, 0.0), 1.0, active_index=1)
    with pytest.raises(ValueError):
        empc_step(cruising(params), done, params, ControllerConfig())
