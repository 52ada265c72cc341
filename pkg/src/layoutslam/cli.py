"""Command line interface.

Subcommands share one output directory: ``simulate`` writes sensor data,
``solve`` reads it and writes the reconstruction, ``evaluate`` scores it,
``plot`` redraws the map and ``all`` does everything in one go. Log
verbosity comes from the ``LAYOUTSLAM_LOG`` environment variable
(``WARNING`` by default).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from . import config as config_mod
from . import pipeline as pl
from .export import export_map


def _add_common(p: argparse.ArgumentParser, solve: bool = True) -> None:
    p.add_argument("--config", required=True, help="scenario JSON path or bundled scenario name")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, default=None, help="override the noise seed")
    if solve:
        p.add_argument("--stage", choices=pl.STAGES, default="convex", help="last solve stage to run")
        p.add_argument("--epsilon", type=float, default=None, help="relative slack on the residual bound")
        p.add_argument("--mu", type=float, default=None, help="acceptance threshold on equivalence gaps [m]")
        p.add_argument("--max-gap", type=float, default=None, help="largest offset gap that forms a hypothesis [m]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layoutslam", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("simulate", help="generate odometry and range or depth data"), solve=False)
    _add_common(sub.add_parser("solve", help="front end and back end on simulated data"))
    _add_common(sub.add_parser("evaluate", help="score a reconstruction against ground truth"), solve=False)
    p = sub.add_parser("plot", help="render map.svg from map.json")
    p.add_argument("--out", default="out", help="output directory holding map.json")
    _add_common(sub.add_parser("all", help="simulate, solve and evaluate"))
    sub.add_parser("scenarios", help="list bundled scenarios")
    return parser


def _load(args) -> dict:
    cfg = config_mod.load_config(args.config)
    return pl.apply_overrides(
        cfg,
        seed=args.seed,
        epsilon=getattr(args, "epsilon", None),
        mu=getattr(args, "mu", None),
        max_gap=getattr(args, "max_gap", None),
    )


def _cmd_simulate(args) -> int:
    cfg = _load(args)
    sim = pl.simulate(config_mod.build_scenario(cfg))
    pl.write_simulation(sim, Path(args.out))
    print(f"simulated {sim.n_frames} frames ({sim.mode}) into {args.out}")
    return 0


def _cmd_solve(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    solution, artifacts = pl.reconstruct(pl.read_simulation(out), cfg, args.stage)
    pl.write_reconstruction(solution, artifacts, out)
    print(f"solved to stage {args.stage}: {len(solution['structures'])} structures")
    for w in solution["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    solution = json.loads((out / "solution.json").read_text())
    report = pl.evaluate(pl.read_simulation(out), solution, cfg)
    (out / "report.json").write_text(report.to_json())
    print(pl.format_report(report))
    return 0


def _cmd_plot(args) -> int:
    out = Path(args.out)
    structures, poses = pl.read_map(out)
    (out / "map.svg").write_text(export_map(structures, poses, "svg"))
    print(f"wrote {out / 'map.svg'}")
    return 0


def _cmd_all(args) -> int:
    report = pl.run_pipeline(
        args.config, args.out, args.stage, seed=args.seed, epsilon=args.epsilon, mu=args.mu, max_gap=args.max_gap
    )
    print(pl.format_report(report))
    return 0


def _cmd_scenarios(args) -> int:
    for name in config_mod.bundled_scenarios():
        print(name)
    return 0


COMMANDS = {
    "simulate": _cmd_simulate,
    "solve": _cmd_solve,
    "evaluate": _cmd_evaluate,
    "plot": _cmd_plot,
    "all": _cmd_all,
    "scenarios": _cmd_scenarios,
}


def main(argv=None) -> int:
    level = os.environ.get("LAYOUTSLAM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (config_mod.ConfigError, pl.PipelineError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
