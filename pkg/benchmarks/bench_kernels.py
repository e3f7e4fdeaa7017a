"""Numba vs plain-numpy timing of the hot kernels.

Each backend runs in its own interpreter because the switch is read at
import time. Usage::

    python3 benchmarks/bench_kernels.py [--repeat 200] [--sim-time 20]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def worker(repeat, sim_time):
    import numpy as np

    from asv_empc import kernels
    from asv_empc._jit import backend_name
    from asv_empc.controllers import ControllerConfig, empc_bounds, empc_cold_start, empc_config_array, empc_step
    from asv_empc.path import geometry_array, make_path
    from asv_empc.sim import default_scenario, run_closed_loop
    from asv_empc.vessel import VesselState, preset

    p = preset("sim")
    cfg = ControllerConfig()
    state = VesselState(0.06, 0.001, 0.01, 1.0, 0.2, 0.05)
    path = make_path([(6.0, 0.0), (10.0, 4.0)], (0.0, 0.0))
    z = empc_cold_start(state, path, p, cfg)
    x0, par, geo, c = np.asarray(state), p.as_array(), geometry_array(path), empc_config_array(cfg)
    w = np.zeros(3)
    g, j = np.empty(z.size), np.empty(z.size)

    value = lambda: kernels.empc_value(z, x0, w, par, geo, c, cfg.horizon)
    fd = lambda: kernels.empc_fd(z, x0, w, par, geo, c, 1e-6, g, j)
    solve = lambda: empc_step(state, path, p, cfg)
    t_compile = time.perf_counter()
    value(), fd(), solve()
    t_compile = time.perf_counter() - t_compile

    sc = default_scenario(1).replace(max_time=sim_time)
    t0 = time.perf_counter()
    _, m = run_closed_loop(sc, ControllerConfig(variant="cc_empc"))
    sim_wall = time.perf_counter() - t0

    f0, c0 = value()
    fd()
    return {
        "backend": backend_name(),
        "first_call_s": t_compile,
        "empc_value_us": 1e6 * _best(value, repeat),
        "empc_fd_us": 1e6 * _best(fd, repeat),
        "empc_step_ms": 1e3 * _best(solve, max(3, repeat // 20)),
        "closed_loop_s": sim_wall,
        "sim_time_s": sim_time,
        "objective": f0,
        "residual": c0,
        "gradient_head": g[:4].tolist(),
        "energy_J": m.energy_J,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--sim-time", type=float, default=20.0)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        print(json.dumps(worker(args.repeat, args.sim_time)))
        return

    rows = {}
    for flag in ("1", "0"):
        env = {**os.environ, "ASV_EMPC_NUMBA": flag}
        cmd = [sys.executable, __file__, "--worker", "--repeat", str(args.repeat), "--sim-time", str(args.sim_time)]
        out = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True).stdout
        r = json.loads(out.strip().splitlines()[-1])
        rows[r["backend"]] = r

    nb, np_ = rows["numba"], rows["numpy"]
    print(f"{'metric':<18}{'numba':>14}{'numpy':>14}{'speedup':>10}")
    for key in ("empc_value_us", "empc_fd_us", "empc_step_ms", "closed_loop_s"):
        print(f"{key:<18}{nb[key]:>14.2f}{np_[key]:>14.2f}{np_[key] / nb[key]:>9.1f}x")
    print(f"{'first_call_s':<18}{nb['first_call_s']:>14.2f}{np_['first_call_s']:>14.2f}")
    print(f"objective  numba {nb['objective']:.15g}  numpy {np_['objective']:.15g}")
    print(f"energy     numba {nb['energy_J']:.15g}  numpy {np_['energy_J']:.15g}  ({args.sim_time:g} s simulated)")


if __name__ == "__main__":
    main()
