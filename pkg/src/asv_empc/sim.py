"""Closed-loop simulation, run metrics, scenario files and result export."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import disturbance as dist
from .controllers import Controller, ControllerConfig
from .path import PathState, cross_track_error, inside_any_coa, make_path, mission_complete, update_active
from .vessel import (ThrustCmd, VesselParams, VesselState, clamp_thrust, params_from_dict, preset,
                     stage_power, step_discrete)

log = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ("t", "u", "v", "r", "x", "y", "psi", "T1", "T2", "tau_u", "tau_v",
                      "power_W", "e_m", "wp_index")

DEFAULT_WAYPOINTS = ((6.0, 0.0), (10.0, 4.0), (10.0, 10.0), (4.0, 12.0), (0.0, 8.0))


class ScenarioError(ValueError):
    pass


class SolverFailure(RuntimeError):
    pass


@dataclass
class Scenario:
    params: VesselParams
    waypoints: tuple
    initial_state: VesselState = VesselState()
    disturbance: dist.DisturbanceSpec = dist.DisturbanceSpec()
    controllers: list = field(default_factory=lambda: [ControllerConfig()])
    dt: float = 0.1
    max_time: float = 1500.0
    r_coa: float = 1.0
    plant_substeps: int = 1
    dead_zone: bool = False
    max_fail_streak: int = 10
    out_dir: Optional[str] = None
    name: str = "scenario"

    def __post_init__(self):
        if not self.waypoints:
            raise ScenarioError("scenario needs at least one waypoint")
        if not self.max_time > 0:
            raise ScenarioError("max_time must be positive")
        if not self.dt > 0:
            raise ScenarioError("dt must be positive")
        if self.plant_substeps < 1:
            raise ScenarioError("plant_substeps must be >= 1")
        for c in self.controllers:
            if abs(c.dt - self.dt) > 1e-12:
                raise ScenarioError(f"controller dt {c.dt} differs from plant dt {self.dt} (single-rate loop)")
        try:
            self.path()
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None

    def path(self) -> PathState:
        return make_path(self.waypoints, (self.initial_state.x, self.initial_state.y), self.r_coa)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)


@dataclass
class TrajectoryLog:
    """One row per control interval plus a final row for the terminal sample.

    Row ``k`` holds the state at ``t_k``, the thrust and disturbance applied over
    ``[t_k, t_k + dt)``, the stage power of that thrust, the gated cross-track
    error at ``t_k`` and the active waypoint index (``len(waypoints)`` once done).
    The final row carries zero thrust and zero power.
    """

    rows: list = field(default_factory=list)
    solve_times: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    def append(self, t, state, thrust, tau, power, e, wp_index):
        self.rows.append((t, *state, thrust[0], thrust[1], tau[0], tau[1], power, e, wp_index))

    def array(self) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, len(TRAJECTORY_COLUMNS)))
        return np.array(self.rows, dtype=float)

    def __len__(self):
        return len(self.rows)


@dataclass
class RunMetrics:
    energy_J: float
    avg_cross_track_m: Optional[float]
    travel_time_s: Optional[float]
    complete: bool
    solve_time_ms: dict = field(default_factory=dict)
    steps: int = 0
    fallbacks: int = 0

    def to_dict(self) -> dict:
        return {
            "energy_J": self.energy_J,
            "avg_cross_track_m": self.avg_cross_track_m,
            "travel_time_s": self.travel_time_s,
            "complete": self.complete,
            "solve_time_ms": dict(self.solve_time_ms),
        }


def _solve_time_stats(times: Sequence[float]) -> dict:
    if not times:
        return {"mean": None, "p95": None, "max": None}
    ms = np.asarray(times) * 1e3
    return {"mean": float(ms.mean()), "p95": float(np.percentile(ms, 95)), "max": float(ms.max())}


def compute_metrics(log_: TrajectoryLog, path: PathState, solve_times: Sequence[float] = ()) -> RunMetrics:
    """Derive run metrics from the logged rows alone."""
    data = log_.array()
    if data.shape[0] == 0:
        raise ValueError("empty trajectory log")
    n_wp = len(path.waypoints)
    complete = bool(data[-1, 13] >= n_wp)
    if data.shape[0] > 1:
        dt = float(data[1, 0] - data[0, 0])
        energy = float(np.sum(data[:-1, 11]) * dt)
    else:
        energy = 0.0
    samples = [row[12] for row in data if not inside_any_coa(path, (row[4], row[5]))]
    avg = float(np.mean(samples)) if samples else None
    return RunMetrics(
        energy_J=energy,
        avg_cross_track_m=avg,
        travel_time_s=float(data[-1, 0]) if complete else None,
        complete=complete,
        solve_time_ms=_solve_time_stats(solve_times),
        steps=data.shape[0] - 1,
    )


def run_closed_loop(scenario: Scenario, controller_config: Optional[ControllerConfig] = None,
                    progress: bool = False):
    """Simulate one controller on ``scenario``; returns ``(TrajectoryLog, RunMetrics)``."""
    cfg = controller_config or scenario.controllers[0]
    params = scenario.params
    ctrl = Controller(params, cfg)
    path = scenario.path()
    state = scenario.initial_state
    dt = scenario.dt
    h = dt / scenario.plant_substeps
    n_steps = int(round(scenario.max_time / dt))
    out = TrajectoryLog()

    path = update_active(path, (state.x, state.y))
    fail_streak = 0
    fallbacks = 0
    k = 0
    while not mission_complete(path) and k < n_steps:
        tau = dist.sample(scenario.disturbance, (state.x, state.y), state.psi)
        cmd, _, diag = ctrl.step(state, path, tau)
        out.solve_times.append(diag.solve_time)
        out.diagnostics.append(diag)
        if diag.fallback:
            fallbacks += 1
            fail_streak += 1
            if fail_streak > scenario.max_fail_streak:
                raise SolverFailure(f"{cfg.variant}: {fail_streak} consecutive solver failures at t={k * dt:.1f} s "
                                    f"(last status {diag.status})")
        else:
            fail_streak = 0
        applied = clamp_thrust(cmd, params, dead_zone=scenario.dead_zone)
        e = cross_track_error(path, (state.x, state.y))
        out.append(k * dt, state, applied, tau, stage_power(applied, params), e, path.active_index)
        for _ in range(scenario.plant_substeps):
            state = step_discrete(state, applied, tau, h, params)
        k += 1
        path = update_active(path, (state.x, state.y))
        if progress and k % 500 == 0:
            log.info("%s t=%.1f s wp=%d", cfg.variant, k * dt, path.active_index)

    tau = dist.sample(scenario.disturbance, (state.x, state.y), state.psi)
    e = 0.0 if path.complete else cross_track_error(path, (state.x, state.y))
    out.append(k * dt, state, ThrustCmd(0.0, 0.0), tau, 0.0, e, path.active_index)
    metrics = compute_metrics(out, scenario.path(), out.solve_times)
    metrics.fallbacks = fallbacks
    return out, metrics


# -- export -------------------------------------------------------------------

def _fmt(v) -> str:
    return format(float(v), ".17g")


def export_trajectory(log_: TrajectoryLog, path) -> None:
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRAJECTORY_COLUMNS)
            for row in log_.rows:
                w.writerow([_fmt(v) for v in row[:-1]] + [str(int(row[-1]))])
    except OSError as exc:
        raise OSError(f"cannot write trajectory to {path}: {exc}") from exc


def import_trajectory(path) -> TrajectoryLog:
    out = TrajectoryLog()
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRAJECTORY_COLUMNS:
            raise ValueError(f"{path}: unexpected trajectory header {header}")
        for row in reader:
            vals = [float(v) for v in row[:-1]]
            out.rows.append((*vals, int(row[-1])))
    return out


def export_metrics(metrics: RunMetrics, path) -> None:
    path = Path(path)
    try:
        with open(path, "w") as fh:
            json.dump(metrics.to_dict(), fh, indent=2)
    except OSError as exc:
        raise OSError(f"cannot write metrics to {path}: {exc}") from exc


def export_diagnostics(log_: TrajectoryLog, path) -> None:
    """Per-step solver diagnostics as CSV."""
    cols = ("step", "status", "iterations", "solve_time_ms", "objective", "stage", "E_d", "E_s", "Y",
            "penalty", "constraint_violation", "t_d", "t_s", "fallback")
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for k, d in enumerate(log_.diagnostics):
            b = d.breakdown
            t_d = d.decision.t_d if d.decision is not None and d.decision.t_d is not None else math.nan
            t_s = d.decision.t_s if d.decision is not None and d.decision.t_s is not None else math.nan
            w.writerow([k, d.status, d.iterations, _fmt(d.solve_time * 1e3), _fmt(d.objective),
                        _fmt(b.get("stage", math.nan)), _fmt(b.get("E_d", math.nan)), _fmt(b.get("E_s", math.nan)),
                        _fmt(b.get("Y", math.nan)), _fmt(b.get("penalty", math.nan)),
                        _fmt(d.constraint_violation), _fmt(t_d), _fmt(t_s), int(d.fallback)])


# -- scenario files -----------------------------------------------------------

def scenario_from_dict(data: dict, base_dir: Optional[Path] = None) -> Scenario:
    try:
        vessel = data.get("vessel", {"preset": "sim"})
        params = params_from_dict(vessel) if vessel else preset("sim")
        waypoints = tuple(tuple(float(c) for c in w) for w in data["waypoints"])
        if any(len(w) != 2 for w in waypoints):
            raise ScenarioError("waypoints must be [x, y] pairs")
        sim = dict(data.get("sim", {}))
        init = sim.pop("initial_state", [0, 0, 0, 0, 0, 0])
        if isinstance(init, dict):
            init = VesselState(**{k: float(v) for k, v in init.items()})
        else:
            if len(init) != 6:
                raise ScenarioError("initial_state needs six values [u, v, r, x, y, psi]")
            init = VesselState(*(float(v) for v in init))
        dt = float(sim.pop("dt", 0.1))
        ctrl_dicts = data.get("controllers") or [{"variant": "cc_empc"}]
        controllers = [ControllerConfig.from_dict({"dt": dt, **c}) for c in ctrl_dicts]
        disturbance = dist.spec_from_dict(data.get("disturbance", {"kind": "none"}), base_dir)
        known = {"max_time", "r_coa", "plant_substeps", "dead_zone", "max_fail_streak", "out_dir", "name"}
        unknown = set(sim) - known
        if unknown:
            raise ScenarioError(f"unknown sim option(s): {sorted(unknown)}")
        return Scenario(params=params, waypoints=waypoints, initial_state=init, disturbance=disturbance,
                        controllers=controllers, dt=dt, **sim)
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise ScenarioError(f"invalid scenario: {exc}") from exc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    sc = scenario_from_dict(data, path.parent)
    if sc.name == "scenario":
        sc = sc.replace(name=path.stem)
    return sc


def default_scenario(condition: int = 1, controllers: Sequence[str] = ("cc_empc", "eo_empc", "nmpc")) -> Scenario:
    """Five-waypoint course with a 90-degree-plus turn, starting at rest at the origin facing east."""
    return Scenario(
        params=preset("sim"),
        waypoints=DEFAULT_WAYPOINTS,
        initial_state=VesselState(),
        disturbance=dist.condition(condition),
        controllers=[ControllerConfig(variant=v) for v in controllers],
        name=f"default_c{condition}",
    )


# -- comparison ---------------------------------------------------------------

@dataclass
class ComparisonCell:
    condition: int
    controller: str
    metrics: RunMetrics
    error: Optional[str] = None


def _pct(a, b):
    if a is None or b is None or b == 0:
        return None
    return round(100.0 * (a - b) / b, 2)


def compare(scenario: Scenario, controllers: Sequence[str], conditions: Sequence[int],
            grid: Optional[dist.GridField] = None, out_dir=None) -> dict:
    """Run every controller on every disturbance condition; returns a JSON-ready table."""
    base = {c.variant: c for c in scenario.controllers}
    cells = []
    for cond in conditions:
        sc = scenario.replace(disturbance=dist.condition(cond, grid))
        for name in controllers:
            cfg = base.get(name) or ControllerConfig(variant=name, dt=scenario.dt)
            try:
                log_, m = run_closed_loop(sc, cfg)
                err = None
                if out_dir is not None:
                    export_trajectory(log_, Path(out_dir) / f"c{cond}_{name}_trajectory.csv")
                    export_metrics(m, Path(out_dir) / f"c{cond}_{name}_metrics.json")
            except SolverFailure as exc:
                m = RunMetrics(math.nan, None, None, False)
                err = str(exc)
            cells.append(ComparisonCell(cond, name, m, err))

    table = {"controllers": list(controllers), "conditions": list(conditions), "rows": []}
    for cond in conditions:
        row = {"condition": cond, "runs": {}}
        by = {c.controller: c for c in cells if c.condition == cond}
        for name in controllers:
            c = by[name]
            row["runs"][name] = {**c.metrics.to_dict(), "error": c.error}
        if "cc_empc" in by and "eo_empc" in by:
            cc, eo = by["cc_empc"].metrics, by["eo_empc"].metrics
            row["cc_vs_eo"] = {
                "energy_pct": _pct(cc.energy_J, eo.energy_J),
                "cross_track_pct": _pct(cc.avg_cross_track_m, eo.avg_cross_track_m),
            }
        table["rows"].append(row)
    return table


def render_table(table: dict) -> str:
    names = table["controllers"]
    short = {"nmpc": "NMPC", "eo_empc": "EO-EMPC", "cc_empc": "CC-EMPC"}

    def cell(run, key, unit, fmt):
        v = run.get(key)
        flag = "" if run.get("complete") else "*"
        return (format(v, fmt) + f" {unit}" + flag) if v is not None and not (isinstance(v, float) and math.isnan(v)) else "n/a" + flag

    header = ["cond"] + [f"E {short.get(n, n)}" for n in names] + [f"e {short.get(n, n)}" for n in names] \
        + [f"t {short.get(n, n)}" for n in names] + ["CC vs EO dE", "CC vs EO de"]
    lines = [header]
    for row in table["rows"]:
        runs = row["runs"]
        cols = [f"#{row['condition']}"]
        cols += [cell(runs[n], "energy_J", "J", ".1f") for n in names]
        cols += [cell(runs[n], "avg_cross_track_m", "m", ".3f") for n in names]
        cols += [cell(runs[n], "travel_time_s", "s", ".1f") for n in names]
        d = row.get("cc_vs_eo", {})
        for key in ("energy_pct", "cross_track_pct"):
            v = d.get(key)
            cols.append(f"{v:+.2f}%" if v is not None else "n/a")
        lines.append(cols)
    widths = [max(len(r[i]) for r in lines) for i in range(len(header))]
    text = "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in lines)
    if any(not run.get("complete") for row in table["rows"] for run in row["runs"].values()):
        text += "\n* incomplete run (timeout or solver failure)"
    return text
