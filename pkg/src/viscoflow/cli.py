"""Command-line entry point: solve, analyze, sweep, commute, selftest."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bv_analysis as bv
from . import contact as ct
from . import persistence as io_
from . import reparam as rp
from . import viscous_solver as vs
from .config import ConfigError, RunConfig, bundled_config_path
from .oracle import DEFAULT_SEED

log = logging.getLogger("viscoflow")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
BALANCE_TOL = 1e-3


class CommandFailure(Exception):
    def __init__(self, code, kind, message):
        super().__init__(message)
        self.code, self.kind = code, kind


def _configure_logging():
    level = os.environ.get("VISCOFLOW_LOG", "error").lower()
    if level not in LOG_LEVELS:
        raise CommandFailure(EXIT_CONFIG, "config", f"VISCOFLOW_LOG must be one of {sorted(LOG_LEVELS)}")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _seed(text):
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


# -- shared setup -----------------------------------------------------------------------
def _load(args):
    path = args.config or bundled_config_path("reference")
    cfg = RunConfig.load(path)
    if args.tol_scale is not None:
        cfg = replace(cfg, solver=replace(cfg.solver, tol_scale=args.tol_scale))
    out = Path(args.out or cfg.output.directory)
    return cfg, out


def _tolerances(cfg, problem):
    return ct.default_tolerances(problem, cfg.solver.tol_scale)


def _write_curve(out_dir, stem, problem, traj, tol, cfg):
    files = []
    if "csv" in cfg.output.formats:
        files.append(io_.write_states(out_dir / f"{stem}_states.csv", problem, traj))
        files.append(io_.write_analysis(out_dir / f"{stem}_analysis.csv", problem, traj, tol))
    return files


def _sweep(cfg, problem, q0, path, workers, tol):
    try:
        return bv.limit_sweep(problem, q0, cfg.times(), path, cfg.params.grid(path), cfg.solver.options(),
                              workers, tol)
    except vs.StepError as exc:
        raise CommandFailure(EXIT_SOLVER, "solver", str(exc)) from None


def _sweep_files(out_dir, report, problem, tol, cfg):
    files = []
    for k, point in enumerate(report.points):
        files += _write_curve(out_dir, f"{report.path}_{k}", problem, point.knots, tol, cfg)
    return files


def _sweep_summary(problem, report, tol):
    out = report.as_dict()
    out["terminal"] = bv.curve_report(problem, report.terminal.knots, tol)
    out["terminal_balance_ok"] = bool(report.terminal.balance <= BALANCE_TOL)
    return out


# -- commands ---------------------------------------------------------------------------
def cmd_solve(args):
    cfg, out = _load(args)
    problem = cfg.problem()
    q0 = cfg.initial_state(problem)
    params = cfg.param_triple()
    run = vs.solve(problem, q0, cfg.times(), params, cfg.solver.options())
    if run.failed:
        raise CommandFailure(EXIT_SOLVER, "solver", run.failed)
    tol = _tolerances(cfg, problem)
    traj = rp.reparameterize(problem, run, resample=False)
    log.info("solve %s: %d samples", params.as_dict(), traj.n_samples)
    files = _write_curve(out, "trajectory", problem, traj, tol, cfg)
    summary = {
        "params": params.as_dict(),
        "n_samples": traj.n_samples,
        "relative_balance_residual": run.total_residual() / run.energy_scale(),
        "min_dual_gap": float(np.min(run.gaps)) if len(run.gaps) else 0.0,
        "max_dual_gap": float(np.max(run.gaps)) if len(run.gaps) else 0.0,
    }
    files.append(io_.write_json(out / "run.json", summary))
    io_.write_manifest(out, "solve", cfg, args.seed, files, problem)
    return summary


def cmd_analyze(args):
    target = Path(args.trajectory)
    run_dir = target if target.is_dir() else target.parent
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.is_file():
        raise CommandFailure(EXIT_CONFIG, "config", f"no manifest.json next to {target}")
    manifest = json.loads(manifest_path.read_text())
    cfg = RunConfig.from_dict(manifest["config"])
    if args.tol_scale is not None:
        cfg = replace(cfg, solver=replace(cfg.solver, tol_scale=args.tol_scale))
    problem = cfg.problem()
    states = target if target.is_file() else run_dir / "trajectory_states.csv"
    try:
        traj = io_.read_states(states, problem, cfg.param_triple())
    except (OSError, ValueError) as exc:
        raise CommandFailure(EXIT_CONFIG, "input", str(exc)) from None
    report = bv.curve_report(problem, traj, _tolerances(cfg, problem))
    out = Path(args.out) if args.out else run_dir
    io_.write_json(out / "analysis_report.json", report)
    return report


def cmd_sweep(args):
    cfg, out = _load(args)
    problem = cfg.problem()
    tol = _tolerances(cfg, problem)
    report = _sweep(cfg, problem, cfg.initial_state(problem), cfg.params.path, args.workers, tol)
    files = _sweep_files(out, report, problem, tol, cfg)
    summary = _sweep_summary(problem, report, tol)
    files.append(io_.write_json(out / "sweep_report.json", summary))
    io_.write_manifest(out, "sweep", cfg, args.seed, files, problem)
    return {k: summary[k] for k in ("path", "violations", "cauchy", "terminal_balance", "terminal_balance_ok")}


def cmd_commute(args):
    cfg, out = _load(args)
    problem = cfg.problem()
    tol = _tolerances(cfg, problem)
    q0 = cfg.initial_state(problem)
    reports, files = {}, []
    for path in (bv.EPS_FIRST, bv.EPSNU_FIRST, bv.JOINT):
        rep = _sweep(cfg, problem, q0, path, args.workers, tol)
        files += _sweep_files(out, rep, problem, tol, cfg)
        reports[path] = rep
    terminals = {p: r.terminal.curve for p, r in reports.items()}
    paths = list(terminals)
    distances = {f"{a}|{b}": rp.curve_distance(problem, terminals[a], terminals[b])
                 for i, a in enumerate(paths) for b in paths[i + 1:]}
    summary = {
        "paths": {p: _sweep_summary(problem, r, tol) for p, r in reports.items()},
        "terminal_distances": distances,
        "balance_tolerance": BALANCE_TOL,
        "same_notion": all(r.terminal.balance <= BALANCE_TOL for r in reports.values()),
    }
    files.append(io_.write_json(out / "commute_report.json", summary))
    io_.write_manifest(out, "commute", cfg, args.seed, files, problem)
    return {"same_notion": summary["same_notion"],
            "terminal_balance": {p: r.terminal.balance for p, r in reports.items()},
            "terminal_distances": distances}


def cmd_selftest(args):
    from .selftest import run_selftest

    result = run_selftest(args.seed)
    if args.out:
        io_.write_json(Path(args.out) / "selftest.json", result)
    if not result["passed"]:
        raise CommandFailure(EXIT_CHECK, "selftest", json.dumps(result["failures"]))
    return result


COMMANDS = {
    "solve": cmd_solve,
    "analyze": cmd_analyze,
    "sweep": cmd_sweep,
    "commute": cmd_commute,
    "selftest": cmd_selftest,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (JSON); default: bundled reference")
    common.add_argument("--out", help="output directory; default: the config's output.directory")
    common.add_argument("--workers", type=_positive_int, default=1, help="worker processes for sweeps")
    common.add_argument("--seed", type=_seed, default=DEFAULT_SEED, help="random seed (default 0xC0FFEE)")
    common.add_argument("--tol-scale", type=_positive_float, default=None, help="scale all classification tolerances")
    parser = argparse.ArgumentParser(prog="viscoflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="run one viscous evolution")
    an = sub.add_parser("analyze", parents=[common], help="single-curve checks on a stored trajectory")
    an.add_argument("trajectory", help="run directory or states CSV written by solve")
    sub.add_parser("sweep", parents=[common], help="limit sweep along the configured path")
    sub.add_parser("commute", parents=[common], help="all three limit paths and the commutation report")
    sub.add_parser("selftest", parents=[common], help="oracle-backed checks on built-in tiny instances")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _configure_logging()
        result = COMMANDS[args.command](args)
    except CommandFailure as exc:
        print(json.dumps({"status": "error", "kind": exc.kind, "message": str(exc)}), file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(json.dumps({"status": "error", "kind": "config", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except vs.StepError as exc:
        print(json.dumps({"status": "error", "kind": "solver", "message": str(exc)}), file=sys.stderr)
        return EXIT_SOLVER
    print(json.dumps(io_.jsonable({"status": "ok", "command": args.command, "result": result}), indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
