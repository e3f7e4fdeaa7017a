"""Energy-aware economic MPC for ASV path following."""

from ._jit import USE_NUMBA, backend_name
from .collocation import OracleResult, collocation_oracle
from .controllers import Controller, ControllerConfig, HorizonDecision, StepDiagnostics
from .disturbance import DisturbanceSpec, GridField, condition, load_grid, sample
from .path import PathState, Waypoint, cross_track_error, make_path, mission_complete, update_active
from .sim import Scenario, RunMetrics, TrajectoryLog, compare, compute_metrics, default_scenario, run_closed_loop
from .terminal import TerminalCost, TerminalSnapshot, terminal_cost
from .vessel import BodyWrench, ThrustCmd, VesselParams, VesselState, preset, step_discrete

__version__ = "0.1.0"
