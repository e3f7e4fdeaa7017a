"""Command-line entry point: ``asv-empc {run,compare,validate,oracle,selftest}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from ._jit import backend_name
from .collocation import collocation_oracle
from .disturbance import GridFormatError
from .nlp import write_trace_csv
from .selftest import run_selftest
from .sim import (ScenarioError, SolverFailure, compare, export_diagnostics, export_metrics, export_trajectory,
                  load_scenario, render_table, run_closed_loop)

EXIT_OK, EXIT_INVALID, EXIT_FAILED, EXIT_TIMEOUT = 0, 1, 2, 3

ALIASES = {"cc": "cc_empc", "eo": "eo_empc", "nmpc": "nmpc",
           "cc_empc": "cc_empc", "eo_empc": "eo_empc", "cc-empc": "cc_empc", "eo-empc": "eo_empc"}


def parse_conditions(text: str) -> list[int]:
    """``"1-5"``, ``"2"`` or ``"1,3,5"`` to a list of condition numbers."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out or any(c < 1 or c > 5 for c in out):
        raise ValueError(f"conditions must lie in 1..5, got {text!r}")
    return out


def parse_controllers(text: str) -> list[str]:
    out = []
    for name in text.split(","):
        key = name.strip().lower()
        if key not in ALIASES:
            raise ValueError(f"unknown controller {name!r}; use cc, eo or nmpc")
        out.append(ALIASES[key])
    return out


def _out_dir(args, scenario) -> Path:
    if args.out:
        d = Path(args.out)
    elif scenario.out_dir:
        d = Path(scenario.out_dir)
    else:
        d = Path("out") / scenario.name
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load(path):
    try:
        return load_scenario(path)
    except (ScenarioError, GridFormatError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return None


def cmd_validate(args) -> int:
    sc = _load(args.scenario)
    if sc is None:
        return EXIT_INVALID
    names = ", ".join(c.variant for c in sc.controllers)
    n = len(sc.waypoints)
    print(f"ok: {sc.name}: {n} waypoint{'s' if n != 1 else ''}, disturbance {sc.disturbance.kind}, controllers {names}")
    return EXIT_OK


def cmd_run(args) -> int:
    sc = _load(args.scenario)
    if sc is None:
        return EXIT_INVALID
    out = _out_dir(args, sc)
    trace_steps = sorted({int(s) for s in args.trace_steps.split(",")}) if args.trace_steps else []
    code = EXIT_OK
    for cfg in sc.controllers:
        try:
            log_, m = run_closed_loop(sc, cfg, progress=args.verbose)
        except SolverFailure as exc:
            print(f"{cfg.variant}: run failed: {exc}", file=sys.stderr)
            code = max(code, EXIT_FAILED)
            continue
        stem = cfg.variant
        export_trajectory(log_, out / f"{stem}_trajectory.csv")
        export_metrics(m, out / f"{stem}_metrics.json")
        export_diagnostics(log_, out / f"{stem}_diagnostics.csv")
        for k in trace_steps:
            if k < len(log_.diagnostics):
                write_trace_csv(log_.diagnostics[k].trace, out / f"{stem}_trace_step{k}.csv")
        t = f"{m.travel_time_s:.1f} s" if m.complete else "incomplete"
        e = f"{m.avg_cross_track_m:.3f} m" if m.avg_cross_track_m is not None else "n/a"
        print(f"{cfg.variant}: energy {m.energy_J:.1f} J, avg cross-track {e}, travel time {t}")
        if not m.complete and code == EXIT_OK:
            code = EXIT_TIMEOUT
    print(f"results in {out}")
    return code


def cmd_compare(args) -> int:
    sc = _load(args.scenario)
    if sc is None:
        return EXIT_INVALID
    try:
        controllers = parse_controllers(args.controllers)
        conditions = parse_conditions(args.conditions)
    except ValueError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    out = _out_dir(args, sc)
    grid = sc.disturbance.grid if sc.disturbance.kind == "grid" else None
    table = compare(sc, controllers, conditions, grid=grid, out_dir=out)
    text = render_table(table)
    print(text)
    (out / "comparison.txt").write_text(text + "\n")
    with open(out / "comparison.json", "w") as fh:
        json.dump(table, fh, indent=2)
    runs = [r for row in table["rows"] for r in row["runs"].values()]
    if any(r["error"] for r in runs):
        return EXIT_FAILED
    if not all(r["complete"] for r in runs):
        return EXIT_TIMEOUT
    return EXIT_OK


def cmd_oracle(args) -> int:
    sc = _load(args.scenario)
    if sc is None:
        return EXIT_INVALID
    try:
        res = collocation_oracle(sc.params, sc.initial_state, sc.waypoints, sc.r_coa, args.nodes, sc.disturbance)
    except ValueError as exc:
        print(f"oracle: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = _out_dir(args, sc)
    with open(out / "oracle_trajectory.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("t", "u", "v", "r", "x", "y", "psi", "T1", "T2"))
        for t, s, u in zip(res.times, res.states, res.thrusts):
            w.writerow([format(float(v), ".17g") for v in (t, *s, *u)])
    summary = {"energy_J": res.energy_J, "travel_time_s": res.travel_time_s, "status": res.status,
               "iterations": res.iterations, "max_defect": res.max_defect, "nodes": args.nodes}
    with open(out / "oracle_metrics.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    if not res.feasible:
        print(f"oracle infeasible: solver status {res.status} after {res.iterations} iterations", file=sys.stderr)
        return EXIT_FAILED
    print(f"oracle energy {res.energy_J:.2f} J over {res.travel_time_s:.1f} s ({res.iterations} SQP iterations)")
    return EXIT_OK


def cmd_selftest(args) -> int:
    results = run_selftest(args.seed)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    print(f"backend: {backend_name()}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


class _Parser(argparse.ArgumentParser):
    # usage errors are validation errors, not argparse's default exit status 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="asv-empc", description="Energy-aware economic MPC for ASV path following.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="closed-loop run of every controller in the scenario")
    p.add_argument("scenario")
    p.add_argument("--out", help="output directory")
    p.add_argument("--trace-steps", default="", help="comma-separated control steps whose SQP trace is dumped")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="controllers x disturbance conditions table")
    p.add_argument("scenario")
    p.add_argument("--controllers", default="cc,eo,nmpc")
    p.add_argument("--conditions", default="1-5")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate", help="parse and check a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("oracle", help="offline energy-optimal trajectory by direct collocation")
    p.add_argument("scenario")
    p.add_argument("--nodes", type=int, default=40)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("selftest", help="fast invariant checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (OSError, FloatingPointError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
