"""Receding-horizon controllers: CC-EMPC, EO-EMPC and a quadratic tracking NMPC.

All three use single shooting: the decision vector holds the thrust pair for
each of the ``H`` steps (plus ``t_d, t_s`` for the economic variants) and the
states are rolled out with the same RK4 step as the plant.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .nlp import CONVERGED, INFEASIBLE_STEP, HorizonLayout, NlpProblem, SolveOptions, solve, warm_start_shift
from .path import PathState, geometry_array
from .terminal import TerminalSnapshot
from .vessel import ZERO_WRENCH, BodyWrench, ThrustCmd, VesselParams, VesselState

VARIANTS = ("cc_empc", "eo_empc", "nmpc")


def _empc_solver_defaults() -> SolveOptions:
    return SolveOptions(max_iterations=60, kkt_tolerance=1e-5, constraint_tolerance=1e-7, ftol=1e-13)


def _nmpc_solver_defaults() -> SolveOptions:
    return SolveOptions(max_iterations=60, kkt_tolerance=1e-4)


@dataclass
class ControllerConfig:
    variant: str = "cc_empc"
    horizon: int = 10
    dt: float = 0.1
    T_max: Optional[float] = None           # None: use the vessel's bound
    # economic variants
    n: float = 2.0
    y_weight: Optional[float] = None        # None: 1 for cc_empc, 0 for eo_empc
    penalty_weight: float = 1e4
    u_floor: float = 1e-3
    sinc_seam: float = 1e-4
    t_cap: float = 1e4
    t_d_min: Optional[float] = None         # None: one control period
    cruise_speed: Optional[float] = None    # cold-start speed guess; None: energy-optimal cruise
    # tracking variant
    q_diag: tuple = (0.0, 0.0, 0.0, 10.0, 10.0, 1.0)
    r_diag: tuple = (0.01, 0.01)
    u_ref: float = 3.0
    # shared
    solver: Optional[SolveOptions] = None
    warm_start: bool = True
    use_disturbance: bool = False           # feed the sampled disturbance into the prediction model
    fd_step: float = 1e-6

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown controller variant {self.variant!r}")
        if self.horizon < 2:
            raise ValueError("horizon must be at least 2 steps")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.n > 1:
            raise ValueError("n must exceed 1")
        if self.y_weight is None:
            self.y_weight = 1.0 if self.variant == "cc_empc" else 0.0
        if self.y_weight < 0:
            raise ValueError("y_weight must be non-negative")
        if self.t_d_min is None:
            self.t_d_min = self.dt
        self.q_diag = tuple(float(q) for q in self.q_diag)
        self.r_diag = tuple(float(r) for r in self.r_diag)
        if len(self.q_diag) != 6 or len(self.r_diag) != 2:
            raise ValueError("q_diag needs 6 entries and r_diag 2")
        if min(self.q_diag) < 0 or min(self.r_diag) < 0:
            raise ValueError("tracking weights must be positive semidefinite")
        if not self.u_ref > 0:
            raise ValueError("u_ref must be positive")
        if self.solver is None:
            self.solver = _nmpc_solver_defaults() if self.variant == "nmpc" else _empc_solver_defaults()

    @property
    def economic(self) -> bool:
        return self.variant != "nmpc"

    @property
    def layout(self) -> HorizonLayout:
        return HorizonLayout(self.horizon, self.economic, self.dt)

    def replace(self, **changes) -> "ControllerConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, data: dict) -> "ControllerConfig":
        data = dict(data)
        solver = data.pop("solver", None)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown controller option(s): {sorted(unknown)}")
        if solver is not None:
            base = _nmpc_solver_defaults() if data.get("variant") == "nmpc" else _empc_solver_defaults()
            data["solver"] = dataclasses.replace(base, **solver)
        return cls(**data)


@dataclass
class HorizonDecision:
    thrusts: np.ndarray                     # (H, 2)
    t_d: Optional[float] = None
    t_s: Optional[float] = None

    def as_vector(self) -> np.ndarray:
        z = self.thrusts.reshape(-1)
        if self.t_d is None:
            return z.copy()
        return np.concatenate([z, [self.t_d, self.t_s]])

    @classmethod
    def from_vector(cls, z: np.ndarray, layout: HorizonLayout) -> "HorizonDecision":
        nt = 2 * layout.horizon
        thrusts = np.array(z[:nt], dtype=float).reshape(layout.horizon, 2)
        if layout.has_times:
            return cls(thrusts, float(z[nt]), float(z[nt + 1]))
        return cls(thrusts)

    @property
    def first(self) -> ThrustCmd:
        return ThrustCmd(float(self.thrusts[0, 0]), float(self.thrusts[0, 1]))


@dataclass
class StepDiagnostics:
    terminal: TerminalSnapshot
    breakdown: dict
    objective: float
    status: str
    iterations: int
    solve_time: float
    constraint_violation: float = 0.0
    distance_to_target: float = 0.0
    min_predicted_u: float = math.nan
    fallback: bool = False
    predicted: np.ndarray = field(default=None, repr=False)
    decision: Optional[HorizonDecision] = field(default=None, repr=False)
    trace: list = field(default_factory=list, repr=False)


class _Memo:
    """Caches one finite-difference kernel call so gradient and Jacobian share it."""

    def __init__(self, fn):
        self.fn = fn
        self.key = None
        self.value = None

    def __call__(self, z):
        key = z.tobytes()
        if key != self.key:
            self.value = self.fn(z)
            self.key = key
        return self.value


def _thrust_bound(params: VesselParams, config: ControllerConfig) -> float:
    return params.T_max if config.T_max is None else min(config.T_max, params.T_max)


def _cruise_guess(params: VesselParams, config: ControllerConfig) -> float:
    if config.cruise_speed is not None:
        return config.cruise_speed
    u = params.cruise_speed
    return u if u > 0 else 0.5 * params.max_speed


def empc_config_array(config: ControllerConfig) -> np.ndarray:
    return np.array([config.dt, config.n, config.y_weight, config.penalty_weight,
                     config.u_floor, config.sinc_seam])


def empc_bounds(params: VesselParams, config: ControllerConfig):
    tmax = _thrust_bound(params, config)
    nt = 2 * config.horizon
    lo = np.concatenate([np.full(nt, -tmax), [config.t_d_min, 0.0]])
    hi = np.concatenate([np.full(nt, tmax), [config.t_cap, config.t_cap]])
    return lo, hi


def empc_cold_start(state: VesselState, path: PathState, params: VesselParams,
                    config: ControllerConfig) -> np.ndarray:
    u_c = _cruise_guess(params, config)
    tmax = _thrust_bound(params, config)
    t_each = min(params.Xu * u_c / 2.0, tmax)
    xa, ya = path.active
    d = math.hypot(xa - state.x, ya - state.y)
    z = np.full(2 * config.horizon, t_each)
    t_d = max(1.0, config.t_d_min)
    return np.concatenate([z, [t_d, max(d / u_c - t_d, 0.0)]])


def _shift_hessian(B: np.ndarray, horizon: int) -> np.ndarray:
    nt = 2 * horizon
    n = B.shape[0]
    idx = list(range(2, nt)) + [nt - 2, nt - 1] + list(range(nt, n))
    out = B[np.ix_(idx, idx)].copy()
    dup = [nt - 2, nt - 1]
    others = [i for i in range(n) if i not in dup]
    out[np.ix_(dup, others)] = 0.0
    out[np.ix_(others, dup)] = 0.0
    return out


def _prediction_wrench(disturbance: Optional[BodyWrench], config: ControllerConfig) -> np.ndarray:
    if config.use_disturbance and disturbance is not None:
        return np.array(disturbance, dtype=float)
    return np.zeros(3)


def _accept(result, limit) -> bool:
    if not np.all(np.isfinite(result.x)) or not math.isfinite(result.objective):
        return False
    if result.status == CONVERGED:
        return True
    return result.status != INFEASIBLE_STEP and result.constraint_violation <= limit


def empc_step(state: VesselState, path: PathState, params: VesselParams, config: ControllerConfig,
              previous: Optional[HorizonDecision] = None, hessian: Optional[np.ndarray] = None,
              disturbance: Optional[BodyWrench] = None):
    """One economic MPC solve; returns ``(ThrustCmd, HorizonDecision, StepDiagnostics, hessian)``."""
    if not config.economic:
        raise ValueError("empc_step needs an economic controller variant")
    if path.complete:
        raise ValueError("mission already complete")
    t0 = time.perf_counter()
    x0 = np.asarray(state, dtype=float)
    par = params.as_array()
    geo = geometry_array(path)
    cfg = empc_config_array(config)
    wrench = _prediction_wrench(disturbance, config)
    H = config.horizon
    lo, hi = empc_bounds(params, config)
    layout = config.layout

    if previous is not None and config.warm_start:
        z0 = warm_start_shift(previous.as_vector(), layout, t_s_floor=0.0)
        B0 = _shift_hessian(hessian, H) if hessian is not None else None
    else:
        z0 = empc_cold_start(state, path, params, config)
        B0 = None
    z0 = np.clip(z0, lo, hi)

    h_rel = config.fd_step
    dim = layout.dim

    def fd(z):
        g = np.empty(dim)
        jrow = np.empty(dim)
        kernels.empc_fd(z, x0, wrench, par, geo, cfg, h_rel, g, jrow)
        return g, jrow

    memo = _Memo(fd)
    problem = NlpProblem(
        dim=dim,
        objective=lambda z: kernels.empc_value(z, x0, wrench, par, geo, cfg, H)[0],
        eq_constraints=lambda z: np.array([kernels.empc_value(z, x0, wrench, par, geo, cfg, H)[1]]),
        lower=lo,
        upper=hi,
        evaluate=lambda z: kernels.empc_value(z, x0, wrench, par, geo, cfg, H),
        gradient=lambda z: memo(z)[0],
        jacobian=lambda z: memo(z)[1].reshape(1, -1),
    )
    result = solve(problem, z0, config.solver, hessian=B0)

    xa, ya = path.active
    fallback = False
    z = result.x
    if not _accept(result, 1e-3 * max(1.0, math.hypot(xa - state.x, ya - state.y))):
        fallback = True
        z = z0
    decision = HorizonDecision.from_vector(z, layout)

    states = np.empty((H + 1, 6))
    b = np.empty(kernels.N_BREAKDOWN)
    kernels.empc_terms(z, x0, wrench, par, geo, cfg, states, b)
    term = TerminalSnapshot(*states[H])
    diag = StepDiagnostics(
        terminal=term,
        breakdown={"stage": b[0], "E_d": b[1], "E_s": b[2], "Y": b[3], "penalty": b[4]},
        objective=float(kernels.breakdown_objective(b)),
        status=result.status,
        iterations=result.iterations,
        solve_time=time.perf_counter() - t0,
        constraint_violation=abs(float(b[5])),
        distance_to_target=math.hypot(xa - term.x_H, ya - term.y_H),
        min_predicted_u=float(states[1:, 0].min()),
        fallback=fallback,
        predicted=states,
        decision=decision,
        trace=result.trace,
    )
    tmax = _thrust_bound(params, config)
    cmd = ThrustCmd(min(max(decision.first.T1, -tmax), tmax), min(max(decision.first.T2, -tmax), tmax))
    return cmd, decision, diag, result.hessian


def cc_empc_step(state, path, params, config, previous=None, hessian=None, disturbance=None):
    if config.variant != "cc_empc":
        config = config.replace(variant="cc_empc", y_weight=config.y_weight)
    return empc_step(state, path, params, config, previous, hessian, disturbance)


def eo_empc_step(state, path, params, config, previous=None, hessian=None, disturbance=None):
    """Energy-only economic MPC: the track-error term is removed."""
    config = config.replace(variant="eo_empc", y_weight=0.0)
    return empc_step(state, path, params, config, previous, hessian, disturbance)


def nmpc_reference(state: VesselState, path: PathState, config: ControllerConfig) -> np.ndarray:
    """Reference states (H x 6): points on the active segment advancing at ``u_ref`` from the
    vehicle's projection, held at the active waypoint once they reach it."""
    xp, yp, xa, ya = path.segment()
    dx, dy = xa - xp, ya - yp
    length = math.hypot(dx, dy)
    ex, ey = dx / length, dy / length
    s0 = (state.x - xp) * ex + (state.y - yp) * ey
    heading = math.atan2(dy, dx)
    ref = np.zeros((config.horizon, 6))
    for k in range(config.horizon):
        s = min(s0 + config.u_ref * (k + 1) * config.dt, length)
        ref[k] = (config.u_ref, 0.0, 0.0, xp + s * ex, yp + s * ey, heading)
    return ref


def nmpc_step(state: VesselState, path: PathState, params: VesselParams, config: ControllerConfig,
              previous: Optional[HorizonDecision] = None, hessian: Optional[np.ndarray] = None,
              disturbance: Optional[BodyWrench] = None):
    if config.variant != "nmpc":
        config = config.replace(variant="nmpc")
    if path.complete:
        raise ValueError("mission already complete")
    t0 = time.perf_counter()
    x0 = np.asarray(state, dtype=float)
    par = params.as_array()
    wrench = _prediction_wrench(disturbance, config)
    ref = nmpc_reference(state, path, config)
    q = np.array(config.q_diag)
    r = np.array(config.r_diag)
    H = config.horizon
    tmax = _thrust_bound(params, config)
    lo = np.full(2 * H, -tmax)
    hi = np.full(2 * H, tmax)
    layout = config.layout

    if previous is not None and config.warm_start:
        z0 = warm_start_shift(previous.as_vector(), layout)
        B0 = _shift_hessian(hessian, H) if hessian is not None else None
    else:
        u0 = min(config.u_ref, params.max_speed)
        z0 = np.full(2 * H, min(params.Xu * u0 / 2.0, tmax))
        B0 = None

    def grad(z):
        g = np.empty(2 * H)
        kernels.nmpc_fd(z, x0, wrench, par, ref, q, r, config.dt, config.fd_step, g)
        return g

    problem = NlpProblem(
        dim=2 * H,
        objective=lambda z: kernels.nmpc_value(z, x0, wrench, par, ref, q, r, config.dt),
        lower=lo,
        upper=hi,
        gradient=grad,
    )
    result = solve(problem, np.clip(z0, lo, hi), config.solver, hessian=B0)
    fallback = not _accept(result, math.inf)
    z = z0 if fallback else result.x
    decision = HorizonDecision.from_vector(z, layout)
    states = np.empty((H + 1, 6))
    kernels.rollout(x0, z, wrench, config.dt, par, 0, states)
    cost = float(kernels.nmpc_value(z, x0, wrench, par, ref, q, r, config.dt))
    xa, ya = path.active
    term = TerminalSnapshot(*states[H])
    diag = StepDiagnostics(
        terminal=term,
        breakdown={"tracking": cost},
        objective=cost,
        status=result.status,
        iterations=result.iterations,
        solve_time=time.perf_counter() - t0,
        distance_to_target=math.hypot(xa - term.x_H, ya - term.y_H),
        min_predicted_u=float(states[1:, 0].min()),
        fallback=fallback,
        predicted=states,
        decision=decision,
        trace=result.trace,
    )
    cmd = ThrustCmd(min(max(decision.first.T1, -tmax), tmax), min(max(decision.first.T2, -tmax), tmax))
    return cmd, decision, diag, result.hessian


_STEPS = {"cc_empc": empc_step, "eo_empc": empc_step, "nmpc": nmpc_step}


class Controller:
    """Stateful wrapper keeping the warm start (previous decision and BFGS matrix) between calls."""

    def __init__(self, params: VesselParams, config: ControllerConfig):
        self.params = params
        self.config = config
        self.previous: Optional[HorizonDecision] = None
        self.hessian: Optional[np.ndarray] = None
        self._active_index = None

    @property
    def name(self) -> str:
        return self.config.variant

    def reset(self):
        self.previous = None
        self.hessian = None
        self._active_index = None

    def step(self, state: VesselState, path: PathState, disturbance: Optional[BodyWrench] = None):
        # after a waypoint switch t_d, t_s and the curvature model describe the old leg
        switched = self._active_index is not None and path.active_index != self._active_index
        if switched and self.config.economic and self.previous is not None:
            fresh = empc_cold_start(state, path, self.params, self.config)
            self.previous = HorizonDecision(self.previous.thrusts, float(fresh[-2]), float(fresh[-1]))
            self.hessian = None
        self._active_index = path.active_index
        fn = _STEPS[self.config.variant]
        cmd, decision, diag, hessian = fn(state, path, self.params, self.config,
                                          self.previous, self.hessian, disturbance)
        if diag.fallback:
            self.hessian = None
        else:
            self.hessian = hessian
        self.previous = decision
        return cmd, decision, diag
