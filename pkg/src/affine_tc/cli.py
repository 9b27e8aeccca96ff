"""Command-line front end: ``affine-tc COMMAND --config PATH``.

Each command reads one YAML config (or a shipped preset), writes its CSV and
JSON outputs into ``--out`` and records wall time separately in
``timing.json`` so the main outputs depend only on the config and seed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError, RunConfig, build_gw, build_model, parse_u
from .gw import gw_scaling_experiment
from .levy import DomainError
from .montecarlo import estimate_laplace, timed
from .riccati import build_exponents, solve_riccati
from .solver import (convergence_csv, euler_convergence, euler_solve, exact_piecewise_solve, path_key,
                     sample_drivers, thin)


def _num(x):
    """JSON-safe float: non-finite values become strings."""
    x = float(x)
    return x if math.isfinite(x) else str(x)


def _write(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text, encoding="utf-8")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _header(cfg: RunConfig, command: str) -> dict:
    return {"command": command, "model_hash": cfg.model_hash(), "seed": cfg.seed}


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    model = build_model(cfg)
    sol = cfg.solver
    t_max = float(sol["t_max"])
    drivers = sample_drivers(model, path_key(cfg.seed, 0), float(sol["mesh"]), t_max)
    step = sol.get("report_step")
    grid = None
    if step:
        n_steps = int(math.floor(t_max / float(step) + 1e-9))
        grid = np.append(np.arange(n_steps + 1) * float(step), t_max)
    if sol["choice"] == "exact":
        traj = exact_piecewise_solve(model, drivers, t_max, grid=grid)
    else:
        traj = euler_solve(model, drivers, float(sol["span"]), t_max)
        if grid is not None:
            traj = thin(traj, grid)
    _write(out, "trajectory.csv", traj.to_csv())
    summary = _header(cfg, "simulate") | {
        "solver": sol["choice"],
        "span": sol["span"] if sol["choice"] == "euler" else None,
        "mesh": sol["mesh"],
        "t_max": t_max,
        "rows": int(traj.grid.size),
        "t_end": _num(traj.grid[-1]),
        "exploded": bool(traj.exploded),
        "tau_estimate": _num(traj.tau_estimate),
        "Z_end": [_num(v) for v in traj.Z[-1]],
        "C_end": [_num(v) for v in traj.C[-1, :model.m]],
    }
    _write(out, "summary.json", _json(summary))
    return 0


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    model = build_model(cfg)
    ex, sol = cfg.experiment, cfg.solver
    u = parse_u(ex["u"], model.dim)
    est = estimate_laplace(model, u, float(ex["t"]), int(ex["n_paths"]), cfg.seed, solver=sol["choice"],
                           span=float(sol["span"]), mesh=float(sol["mesh"]),
                           conditional=bool(ex["conditional"]), workers=int(ex["workers"]),
                           oracle_tol=float(ex["tol"]))
    gate = float(ex["gate"])
    failed = est.z_score is not None and est.z_score > gate
    report = _header(cfg, "verify") | est.to_dict() | {"gate": gate, "passed": not failed,
                                                       "solver": sol["choice"]}
    report["std_error"] = _num(est.std_error)
    if est.z_score is not None:
        report["z_score"] = _num(est.z_score)
    _write(out, "verify.json", _json(report))
    return 1 if failed else 0


def cmd_riccati(cfg: RunConfig, out: Path) -> int:
    model = build_model(cfg)
    ex = cfg.experiment
    sol = solve_riccati(build_exponents(model), parse_u(ex["u"], model.dim), float(ex["t"]), float(ex["tol"]))
    _write(out, "riccati.csv", sol.to_csv())
    _write(out, "riccati.json", _json(_header(cfg, "riccati") | {
        "escaped": sol.escaped, "escape_time": _num(sol.escape_time), "escape_reason": sol.escape_reason,
        "rejected_steps": sol.rejected, "max_step": _num(sol.max_step)}))
    return 0


def cmd_gw(cfg: RunConfig, out: Path) -> int:
    spec = build_gw(cfg)
    ex = cfg.experiment
    u = [c.real for c in parse_u(ex["u"], spec.m)]
    table = gw_scaling_experiment(spec, [float(x) for x in ex["ladder"]], u, float(ex["t"]),
                                  int(ex["n_runs"]), cfg.seed)
    _write(out, "gw.csv", table.to_csv())
    _write(out, "gw.json", _json(_header(cfg, "gw") | {
        "oracle": table.rows[0].oracle, "gaps": table.gaps, "shrinking": table.shrinking}))
    return 0


def cmd_euler_study(cfg: RunConfig, out: Path) -> int:
    model = build_model(cfg)
    ex, sol = cfg.experiment, cfg.solver
    t_max, mesh = float(sol["t_max"]), float(sol["mesh"])
    studies = []
    for ds in ex["driver_seeds"]:
        drivers = sample_drivers(model, path_key(int(ds), 0), mesh, t_max)
        studies.append(euler_convergence(model, drivers, ex["spans"], t_max, int(ds)))
    _write(out, "euler_study.csv", convergence_csv(studies))
    _write(out, "euler_study.json", _json(_header(cfg, "euler-study") | {
        "studies": [{"driver_seed": s.driver_seed, "monotone": s.monotone, "slope": s.slope} for s in studies]}))
    return 0


COMMANDS = {
    "simulate": (cmd_simulate, "solve one seeded trajectory (trajectory.csv, summary.json)"),
    "verify": (cmd_verify, "Monte Carlo Laplace transform vs Riccati oracle (verify.json)"),
    "riccati": (cmd_riccati, "solve the Riccati equations (riccati.csv)"),
    "gw": (cmd_gw, "Galton-Watson scaling ladder (gw.csv, gw.json)"),
    "euler-study": (cmd_euler_study, "Euler vs exact sup-error over spans (euler_study.csv)"),
}


def _epilog() -> str:
    return ("config keys (YAML; driver.* and jump.* apply to every driver block):\n"
            + cfgmod.help_keys()
            + "\n\npresets: " + ", ".join(cfgmod.preset_names()))


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="affine-tc", description="Affine processes by multiparameter time change.",
                                     epilog=_epilog(), formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=_epilog(), formatter_class=fmt)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", metavar="PATH", help="YAML run configuration")
        src.add_argument("--preset", metavar="NAME", help="use a shipped preset as the configuration")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
        p.add_argument("--paths", type=int, help="override experiment.n_paths")
        p.add_argument("--gate", type=float, help="override experiment.gate")
        p.add_argument("--workers", type=int, help="override experiment.workers")
    return parser


def load_run_config(args) -> RunConfig:
    if args.config:
        try:
            cfg = cfgmod.load_config_file(args.config)
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from None
    else:
        cfg = cfgmod.load_config(f"preset: {args.preset}\n", f"preset:{args.preset}")
    if args.seed is not None and args.seed < 0:
        raise ConfigError("--seed must be a non-negative integer")
    if args.paths is not None and args.paths < 100:
        raise ConfigError("--paths must be >= 100")
    if args.workers is not None and args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    return cfg.with_overrides(**{"seed": args.seed, "experiment.n_paths": args.paths,
                                 "experiment.gate": args.gate, "experiment.workers": args.workers})


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args)
        fn = COMMANDS[args.command][0]
        out = Path(args.out)
        code, wall = timed(fn, cfg, out)
    except (ConfigError, DomainError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    _write(out, "timing.json", _json({"command": args.command, "wall_seconds": wall}))
    return code


if __name__ == "__main__":
    sys.exit(main())
