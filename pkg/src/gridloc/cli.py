"""Command line driver: run experiments, sweep parameters, dump pmf heatmaps."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import build_scenario, load_config, preset_names
from .engine import init_state, run
from .errors import GridlocError
from .experiment import SWEEP_AXES, ExperimentPlan, dump_heatmap, run_experiment


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True,
                        help="scenario config JSON path or preset name")
    parser.add_argument("--trials", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--max-steps", type=int, default=None)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridloc",
        description="Distributed Bayesian grid localization simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario's Monte-Carlo trials")
    _add_common(p_run)
    p_run.add_argument("--out", required=True, type=Path,
                       help="output directory (GRIDLOC_OUT overrides)")
    p_run.add_argument("--heatmap-node", type=int, action="append", default=[],
                       help="also dump this node's final pmf (repeatable)")

    p_sweep = sub.add_parser("sweep", help="sweep one axis across scenario variants")
    _add_common(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sweep.add_argument("--values", default=None,
                         help="comma-separated sweep values (default: full range)")
    p_sweep.add_argument("--out", required=True, type=Path)

    p_heat = sub.add_parser("heatmap", help="print one node's pmf after a given round")
    _add_common(p_heat)
    p_heat.add_argument("--node", required=True, type=int)
    p_heat.add_argument("--round", required=True, type=int, dest="round_index")
    p_heat.add_argument("--trial", type=int, default=0)
    p_heat.add_argument("--out", type=Path, default=None,
                        help="write to file instead of stdout")

    sub.add_parser("presets", help="list built-in scenario presets")
    return parser


def _cmd_run(args) -> int:
    plan = ExperimentPlan(
        config_source=args.config, out_dir=args.out, trials=args.trials,
        seed=args.seed, max_steps=args.max_steps, heatmap_nodes=args.heatmap_node,
    )
    for path in run_experiment(plan):
        print(path)
    return 0


def _cmd_sweep(args) -> int:
    values = None
    if args.values:
        values = [float(v) for v in args.values.split(",")]
    plan = ExperimentPlan(
        config_source=args.config, out_dir=args.out, trials=args.trials,
        seed=args.seed, max_steps=args.max_steps, axis=args.axis, axis_values=values,
    )
    for path in run_experiment(plan):
        print(path)
    return 0


def _cmd_heatmap(args) -> int:
    import dataclasses

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    scenario, rng = build_scenario(cfg, args.trial)
    state = init_state(scenario, rng, log_samples=False,
                       codec_payload=cfg.codec_payload_bytes)
    run(state, args.round_index)
    text = dump_heatmap(state, args.node)
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)
        print(args.out)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "heatmap":
            return _cmd_heatmap(args)
        for name in preset_names():
            print(name)
        return 0
    except GridlocError as exc:
        print(f"gridloc: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"gridloc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
