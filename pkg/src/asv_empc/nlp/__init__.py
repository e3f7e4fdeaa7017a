from .fd import gradient_fd, jacobian_fd
from .qp import QPSolution, solve_qp
from .sqp import (CONVERGED, INFEASIBLE_STEP, MAX_ITER, STALLED, NlpProblem, SolveOptions,
                  SolveResult, solve, write_trace_csv)
from .warm import HorizonLayout, warm_start_shift

__all__ = [
    "gradient_fd", "jacobian_fd", "QPSolution", "solve_qp", "NlpProblem", "SolveOptions",
    "SolveResult", "solve", "write_trace_csv", "HorizonLayout", "warm_start_shift",
    "CONVERGED", "MAX_ITER", "INFEASIBLE_STEP", "STALLED",
]
