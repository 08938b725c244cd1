"""Command line interface: run experiments, summarize results, inspect checkpoints."""

from __future__ import annotations

import argparse
import dataclasses
import sys

from . import checkpoint as ckpt
from . import harness
from .config import ConfigError, ExperimentConfig, load_config


def _cmd_run(args):
    if args.config:
        config = load_config(args.config)
    else:
        config = ExperimentConfig()
    overrides = {}
    if args.density is not None:
        overrides["densities"] = (args.density,)
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    if args.method is not None:
        overrides["methods"] = (args.method,)
    if args.out is not None:
        overrides["out_dir"] = args.out
    if overrides:
        config = dataclasses.replace(config, **overrides)
    report = harness.run_experiment(config)
    for method, density, seed, err in report["failures"]:
        print(f"FAILED cell ({method}, d={density}, seed={seed}): {err}",
              file=sys.stderr)
    print(f"wrote metrics/events/summary to {report['out_dir']}")
    return 1 if report["failures"] else 0


def _cmd_summarize(args):
    summary = harness.summarize_directory(args.dir)
    for row in summary:
        print(f"density={row['density']:<6g} method={row['method']:<10s} "
              f"n={row['n']} acc={row['mean_acc']:.4f} +/- {row['std_acc']:.4f}")
    return 0


def _cmd_inspect(args):
    state = ckpt.read_checkpoint(args.file)
    print(f"epoch: {state.epoch}")
    print(f"meta: {state.meta}")
    print(f"optimizer: step={state.optimizer['step_count']} "
          f"lr={state.optimizer['base_lr']}")
    print(f"history: window={state.history['window']} "
          f"recorded={state.history['epochs_recorded']}")
    for name in sorted(state.arrays):
        arr = state.arrays[name]
        print(f"  {name:<28s} shape={tuple(arr.shape)} dtype={arr.dtype}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="weightmom",
        description="Iterative magnitude-momentum pruning experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment grid")
    p_run.add_argument("--config", help="flat key=value config file")
    p_run.add_argument("--density", type=float, help="override: single density")
    p_run.add_argument("--seed", type=int, help="override: single seed")
    p_run.add_argument("--method", choices=["weightmom", "random", "oneshot"],
                       help="override: single method")
    p_run.add_argument("--out", help="override: output directory")
    p_run.set_defaults(func=_cmd_run)

    p_sum = sub.add_parser("summarize", help="rebuild summary and plot")
    p_sum.add_argument("dir", help="experiment output directory")
    p_sum.set_defaults(func=_cmd_summarize)

    p_ins = sub.add_parser("inspect-checkpoint", help="describe a checkpoint file")
    p_ins.add_argument("file")
    p_ins.set_defaults(func=_cmd_inspect)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ckpt.CheckpointError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
