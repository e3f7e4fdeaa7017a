"""Energy-to-go and track-error terminal cost.

Beyond the prediction horizon the vehicle is assumed to keep its terminal
surge speed. The remaining leg is split into a dynamic (turning) phase of
length ``t_d`` with a two-ramp yaw-rate profile and a static (straight
cruise) phase of length ``t_s``. Powers for both phases come from inverse
dynamics under ``v ~ 0`` and constant ``u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .vessel import ThrustCmd, VesselParams, VesselState, thruster_power

SINC_SEAM = 1e-4


class TerminalSnapshot(NamedTuple):
    u_H: float
    v_H: float
    r_H: float
    x_H: float
    y_H: float
    psi_H: float

    @classmethod
    def from_state(cls, state: VesselState) -> "TerminalSnapshot":
        return cls(*state)


@dataclass(frozen=True)
class YawProfile:
    """Yaw rate ramps ``r_H -> r_max`` over ``[0, t_d/n]`` then ``r_max -> 0`` over ``[t_d/n, t_d]``."""

    r_H: float
    r_max: float
    a1: float
    a2: float
    t_d: float
    n: float

    @property
    def t_break(self) -> float:
        return self.t_d / self.n

    def rate(self, t):
        """Yaw rate at time(s) ``t`` into the dynamic phase (scalar or numpy array)."""
        tb = self.t_break
        if hasattr(t, "__len__"):
            t = np.asarray(t, dtype=float)
            return np.where(t <= tb, self.r_H + self.a1 * t, self.r_max + self.a2 * (t - tb))
        return self.r_H + self.a1 * t if t <= tb else self.r_max + self.a2 * (t - tb)

    def rate_derivative(self, t):
        tb = self.t_break
        if hasattr(t, "__len__"):
            return np.where(np.asarray(t) <= tb, self.a1, self.a2)
        return self.a1 if t <= tb else self.a2

    def area(self) -> float:
        """Heading change over the profile, summed from its two trapezoids."""
        tb = self.t_break
        return 0.5 * (self.r_H + self.r_max) * tb + 0.5 * self.r_max * (self.t_d - tb)


@dataclass(frozen=True)
class TerminalCost:
    E_d: float
    E_s: float
    Y: float
    t_d: float
    t_s: float

    @property
    def E(self) -> float:
        return self.E_d + self.E_s

    @property
    def total(self) -> float:
        return self.E_d + self.E_s + self.Y


def wrap_to_pi(a: float) -> float:
    """Wrap to (-pi, pi]."""
    return a - 2.0 * math.pi * math.ceil((a - math.pi) / (2.0 * math.pi))


def course_error(snapshot: TerminalSnapshot, target) -> float:
    """Bearing to ``target`` minus course over ground, wrapped to (-pi, pi]."""
    if not snapshot.u_H > 0:
        raise ValueError(f"course error needs u_H > 0, got {snapshot.u_H!r}")
    bearing = math.atan2(target[1] - snapshot.y_H, target[0] - snapshot.x_H)
    return wrap_to_pi(bearing - math.atan(snapshot.v_H / snapshot.u_H) - snapshot.psi_H)


def surge_power(u_H: float, params: VesselParams) -> float:
    """Thruster power holding ``u_H`` against linear surge drag with both thrusters sharing."""
    return 2.0 * thruster_power(params.Xu * u_H / 2.0, params.alpha)


def static_power(u_H: float, params: VesselParams) -> float:
    return surge_power(u_H, params) + params.T_w


def build_yaw_profile(r_H: float, psi_d: float, t_d: float, n: float = 2.0) -> YawProfile:
    if not t_d > 0:
        raise ValueError(f"t_d must be positive, got {t_d!r}")
    if not n > 1:
        raise ValueError(f"phase divisor n must exceed 1, got {n!r}")
    r_max = 2.0 * psi_d / t_d - r_H / n
    a1 = n * (r_max - r_H) / t_d
    a2 = -n * r_max / ((n - 1.0) * t_d)
    return YawProfile(r_H, r_max, a1, a2, t_d, n)


def thrust_from_turn_state(u: float, r: float, rdot: float, params: VesselParams) -> ThrustCmd:
    """Thrust pair holding surge ``u`` steady while yawing at ``r`` with acceleration ``rdot`` (v = 0)."""
    total = params.Xu * u
    diff = (params.m33 * rdot + params.Nr * r) / params.l
    return ThrustCmd(0.5 * (total + diff), 0.5 * (total - diff))


def _node_power(u, r, rdot, params):
    t = thrust_from_turn_state(u, r, rdot, params)
    return thruster_power(t.T1, params.alpha) + thruster_power(t.T2, params.alpha)


def dynamic_power(profile: YawProfile, u_H: float, params: VesselParams) -> float:
    """Mean power over the dynamic phase by the trapezoid rule on each ramp, plus task power."""
    n = profile.n
    p_start = _node_power(u_H, profile.r_H, profile.a1, params)
    p_break_left = _node_power(u_H, profile.r_max, profile.a1, params)
    p_break_right = _node_power(u_H, profile.r_max, profile.a2, params)
    p_end = _node_power(u_H, 0.0, profile.a2, params)
    return (params.T_w + 0.5 * (p_start + p_break_left) / n
            + 0.5 * (n - 1.0) * (p_break_right + p_end) / n)


def track_error_cost(e: float, u_H: float, params: VesselParams) -> float:
    """Energy-equivalent penalty: surge power spent over the time ``e / u_H``."""
    if not u_H > 0:
        raise ValueError(f"track error cost needs u_H > 0, got {u_H!r}")
    if e < 0:
        raise ValueError("cross-track error must be non-negative")
    return e / u_H * surge_power(u_H, params)


def sinc(x: float, seam: float = SINC_SEAM) -> float:
    if abs(x) < seam:
        x2 = x * x
        return 1.0 - x2 / 6.0 + x2 * x2 / 120.0
    return math.sin(x) / x


def time_split_residual(snapshot: TerminalSnapshot, target, t_d: float, t_s: float,
                        seam: float = SINC_SEAM) -> float:
    """Distance covered by the planned dynamic + static phases minus distance to ``target``."""
    dpsi = course_error(snapshot, target)
    d = math.hypot(target[0] - snapshot.x_H, target[1] - snapshot.y_H)
    return snapshot.u_H * (t_d * sinc(dpsi, seam) + t_s) - d


def terminal_cost(snapshot: TerminalSnapshot, target, e: float, t_d: float, t_s: float,
                  params: VesselParams, n: float = 2.0, y_weight: float = 1.0) -> TerminalCost:
    """Dynamic and static energy-to-go plus the track-error cost.

    The course change executed in the dynamic phase is the terminal course error.
    """
    dpsi = course_error(snapshot, target)
    profile = build_yaw_profile(snapshot.r_H, dpsi, t_d, n)
    return TerminalCost(
        E_d=dynamic_power(profile, snapshot.u_H, params) * t_d,
        E_s=static_power(snapshot.u_H, params) * t_s,
        Y=y_weight * track_error_cost(e, snapshot.u_H, params),
        t_d=t_d,
        t_s=t_s,
    )

