"""Three-DOF surface vessel: surge/sway/yaw dynamics, kinematics and thruster power.

The vessel is driven by two horizontal thrusters at lateral arm ``l``; the
body wrench is ``(T1 + T2, 0, (T1 - T2) * l)``. Damping is linear and the mass
matrix diagonal, so the Coriolis matrix is skew-symmetric and does no work.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import kernels


class VesselState(NamedTuple):
    u: float = 0.0
    v: float = 0.0
    r: float = 0.0
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)

    @classmethod
    def from_array(cls, arr) -> "VesselState":
        return cls(*(float(a) for a in arr))


class ThrustCmd(NamedTuple):
    T1: float = 0.0
    T2: float = 0.0


class BodyWrench(NamedTuple):
    Fu: float = 0.0
    Fv: float = 0.0
    Mr: float = 0.0


ZERO_WRENCH = BodyWrench()


@dataclass(frozen=True)
class VesselParams:
    """Inertia, damping and thruster constants (SI units)."""

    m11: float
    m22: float
    m33: float
    Xu: float
    Yv: float
    Nr: float
    l: float
    T_max: float
    T_min: float = 0.0
    alpha: float = 0.4364
    T_w: float = 0.0

    def __post_init__(self):
        for name in ("m11", "m22", "m33", "Xu", "Yv", "Nr", "l", "T_max", "T_min", "alpha", "T_w"):
            val = getattr(self, name)
            if not math.isfinite(val):
                raise ValueError(f"{name} must be finite, got {val!r}")
        if min(self.m11, self.m22, self.m33) <= 0:
            raise ValueError("inertias must be positive")
        if min(self.Xu, self.Yv, self.Nr) < 0:
            raise ValueError("damping coefficients must be non-negative")
        if self.l <= 0:
            raise ValueError("thruster arm l must be positive")
        if not self.T_max > self.T_min >= 0:
            raise ValueError("need T_max > T_min >= 0")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.T_w < 0:
            raise ValueError("T_w must be non-negative")

    def replace(self, **changes) -> "VesselParams":
        return dataclasses.replace(self, **changes)

    def as_array(self) -> np.ndarray:
        return np.array([self.m11, self.m22, self.m33, self.Xu, self.Yv, self.Nr, self.l,
                         self.T_max, self.T_min, self.alpha, self.T_w], dtype=float)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def cruise_speed(self) -> float:
        """Surge speed minimizing energy per metre in steady cruise, ``sqrt(2 T_w / (alpha Xu^2))``.

        Zero when there is no task power (cruising slower is then always cheaper).
        """
        return math.sqrt(2.0 * self.T_w / (self.alpha * self.Xu ** 2))

    @property
    def max_speed(self) -> float:
        return 2.0 * self.T_max / self.Xu if self.Xu > 0 else math.inf


_TABLE2 = dict(m11=12.84, m22=10.65, m33=1.86, Xu=33.57, Yv=50.78, Nr=0.31, l=0.1025,
               T_max=75.0, T_min=10.0, alpha=0.4364, T_w=0.0)

PRESETS = {
    # Measured prototype, including the thruster dead zone.
    "table2": VesselParams(**_TABLE2),
    # Simulation studies: 10 N thrust bound, no dead zone, 1 W task power.
    "sim": VesselParams(**{**_TABLE2, "T_max": 10.0, "T_min": 0.0, "T_w": 1.0}),
}


def preset(name: str, **overrides) -> VesselParams:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown vessel preset {name!r}; choose from {sorted(PRESETS)}") from None
    return base.replace(**overrides) if overrides else base


def params_from_dict(data: dict) -> VesselParams:
    """Build parameters from a mapping; ``preset`` (optional) supplies defaults for missing fields."""
    data = dict(data)
    base = data.pop("preset", None)
    known = {f.name for f in dataclasses.fields(VesselParams)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown vessel parameter(s): {sorted(unknown)}")
    if base is not None:
        return preset(base, **{k: float(v) for k, v in data.items()})
    return VesselParams(**{k: float(v) for k, v in data.items()})


def load_params(path) -> VesselParams:
    with open(Path(path)) as fh:
        return params_from_dict(json.load(fh))


def rotation_matrix(psi: float) -> np.ndarray:
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def coriolis_matrix(u: float, v: float, params: VesselParams) -> np.ndarray:
    return np.array([[0.0, 0.0, -params.m22 * v],
                     [0.0, 0.0, params.m11 * u],
                     [params.m22 * v, -params.m11 * u, 0.0]])


def thrust_wrench(thrust: ThrustCmd, params: VesselParams) -> BodyWrench:
    return BodyWrench(thrust.T1 + thrust.T2, 0.0, (thrust.T1 - thrust.T2) * params.l)


def _check_finite(*values):
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite input {v!r}")


def continuous_derivative(state: VesselState, thrust: ThrustCmd, disturbance: BodyWrench,
                          params: VesselParams) -> np.ndarray:
    """Time derivative ``(u', v', r', x', y', psi')`` of the 6-state."""
    _check_finite(*state, *thrust, *disturbance)
    out = np.empty(6)
    kernels.derivative(np.asarray(state, dtype=float), float(thrust[0]), float(thrust[1]),
                       float(disturbance[0]), float(disturbance[1]), float(disturbance[2]),
                       params.as_array(), out)
    return out


def step_discrete(state: VesselState, thrust: ThrustCmd, disturbance: BodyWrench, dt: float,
                  params: VesselParams) -> VesselState:
    """Advance one fixed RK4 step of length ``dt`` with inputs held constant."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    _check_finite(*state, *thrust, *disturbance)
    out = np.empty(6)
    kernels.rk4_step(np.asarray(state, dtype=float), float(thrust[0]), float(thrust[1]),
                     float(disturbance[0]), float(disturbance[1]), float(disturbance[2]),
                     float(dt), params.as_array(), out)
    return VesselState.from_array(out)


def derivative_batch(states: np.ndarray, thrusts: np.ndarray, wrenches: np.ndarray,
                     params: VesselParams) -> np.ndarray:
    """Vectorised :func:`continuous_derivative` over rows of ``states`` (N x 6)."""
    u, v, r, psi = states[:, 0], states[:, 1], states[:, 2], states[:, 5]
    t1, t2 = thrusts[:, 0], thrusts[:, 1]
    p = params
    out = np.empty_like(states)
    out[:, 0] = (t1 + t2 + p.m22 * v * r - p.Xu * u + wrenches[:, 0]) / p.m11
    out[:, 1] = (-p.m11 * u * r - p.Yv * v + wrenches[:, 1]) / p.m22
    out[:, 2] = ((t1 - t2) * p.l - (p.m22 - p.m11) * u * v - p.Nr * r + wrenches[:, 2]) / p.m33
    c, s = np.cos(psi), np.sin(psi)
    out[:, 3] = c * u - s * v
    out[:, 4] = s * u + c * v
    out[:, 5] = r
    return out


def kinetic_energy(state: VesselState, params: VesselParams) -> float:
    return 0.5 * (params.m11 * state.u ** 2 + params.m22 * state.v ** 2 + params.m33 * state.r ** 2)


def thruster_power(T: float, alpha: float) -> float:
    return alpha * T * T


def stage_power(thrust: ThrustCmd, params: VesselParams) -> float:
    """Instantaneous propulsion plus task power in watts."""
    return thruster_power(thrust[0], params.alpha) + thruster_power(thrust[1], params.alpha) + params.T_w


def clamp_thrust(thrust: ThrustCmd, params: VesselParams, dead_zone: bool = False) -> ThrustCmd:
    """Clip to ``[-T_max, T_max]``; with ``dead_zone`` snap ``|T| < T_min`` to zero."""
    out = []
    for t in thrust:
        t = min(max(float(t), -params.T_max), params.T_max)
        if dead_zone and abs(t) < params.T_min:
            t = 0.0
        out.append(t)
    return ThrustCmd(*out)
