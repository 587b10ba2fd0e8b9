"""Command-line entry points.

Subcommands: pretrain, train, eval, sweep, replay, plot, inspect-checkpoint.
Every subcommand accepts ``--config <path>`` (flat key = value file) and
``--seed <u64>``. Exit codes: 0 success, 1 configuration error, 2 invariant
violation.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from .config import TrainConfig, load_config
from .errors import ConfigurationError, InvariantViolation
from .network import NetworkParams
from .training import collect_demos, pretrain, run_training


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors, per the CLI contract."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_cfg(args) -> TrainConfig:
    cfg = load_config(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _add_common(sub):
    sub.add_argument("--config", help="flat key = value configuration file")
    sub.add_argument("--seed", type=int, help="master RNG seed")


def _cmd_pretrain(args) -> int:
    cfg = _load_cfg(args)
    os.makedirs(args.out, exist_ok=True)
    root = np.random.SeedSequence(cfg.seed)
    ss_init, ss_demo, ss_fit, _ = root.spawn(4)
    params = NetworkParams.init(cfg.apg_sectors, cfg.history_len,
                                np.random.default_rng(ss_init))
    print(f"collecting {cfg.pretrain_episodes} demonstration episodes", flush=True)
    demos = collect_demos(cfg, cfg.pretrain_episodes, ss_demo)
    print(f"fitting {sum(t.steps for t in demos.traces)} states "
          f"for {cfg.pretrain_epochs} epochs", flush=True)
    stats = pretrain(demos, params, cfg, np.random.default_rng(ss_fit))
    path = os.path.join(args.out, "pretrain.ckpt")
    params.save(path)
    print(f"holdout MSE {stats['holdout_mse']:.6f} "
          f"(zero baseline {stats['zero_baseline_mse']:.6f})")
    print(f"saved {path}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_cfg(args)
    initial = NetworkParams.load(args.init) if args.init else None
    result = run_training(cfg, out_dir=args.out, progress=lambda m: print(m, flush=True),
                          initial_params=initial)
    successes = sum(r.outcome == "success" for r in result.curve)
    print(f"finished {len(result.curve)} episodes, "
          f"{successes} successes; outputs in {args.out}")
    return 0


def _cmd_eval(args) -> int:
    from .evaluation import evaluate, export_trajectory, preset, write_summary
    cfg = _load_cfg(args)
    if args.peds is not None:
        cfg = dataclasses.replace(cfg, n_pedestrians=args.peds)
    p = preset(args.policy, checkpoint=args.checkpoint)
    params = NetworkParams.load(args.checkpoint) if (p.uses_network and args.checkpoint) else None
    summary, records = evaluate(p, args.episodes, cfg, cfg.seed, params=params)
    os.makedirs(args.out, exist_ok=True)
    write_summary(summary, os.path.join(args.out, "summary.csv"), label=p.name)
    traj_dir = os.path.join(args.out, "trajectories")
    os.makedirs(traj_dir, exist_ok=True)
    for i, record in enumerate(records):
        export_trajectory(record, os.path.join(traj_dir, f"episode_{i:05d}.csv"))
    print(f"{p.name}: success {summary.success_rate:.3f} "
          f"collision {summary.collision_rate:.3f} "
          f"timeout {summary.timeout_rate:.3f} "
          f"avg time {summary.avg_time:.2f} s "
          f"avg return {summary.avg_return:.4f} "
          f"avg min gap {summary.avg_min_gap:.3f} m")
    print(f"outputs in {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    from .evaluation import preset, sweep_pedestrians
    import csv as csv_mod
    cfg = _load_cfg(args)
    p = preset(args.policy, checkpoint=args.checkpoint)
    params = NetworkParams.load(args.checkpoint) if (p.uses_network and args.checkpoint) else None
    counts = range(args.min_peds, args.max_peds + 1)
    summaries = sweep_pedestrians(p, cfg, cfg.seed, counts=counts,
                                  n_episodes=args.episodes, params=params)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "sweep.csv")
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = None
        for count, summary in summaries.items():
            row = {"n_pedestrians": count, **summary.as_row()}
            if writer is None:
                writer = csv_mod.DictWriter(fh, fieldnames=list(row.keys()))
                writer.writeheader()
            writer.writerow(row)
    for count, summary in summaries.items():
        print(f"N={count}: success {summary.success_rate:.3f} "
              f"avg time {summary.avg_time:.2f} s")
    print(f"wrote {out_path}")
    return 0


def _cmd_replay(args) -> int:
    from .evaluation import read_trajectory, replay_return
    cfg = _load_cfg(args)
    rows = read_trajectory(args.infile)
    robot_rows = [r for r in rows if r["kind"] == "robot"]
    ret = replay_return(rows, cfg.step_discount)
    final_sep = robot_rows[-1]["min_sep"]
    print(f"steps: {len(robot_rows)}")
    print(f"duration: {robot_rows[-1]['t']:.2f} s")
    print(f"discounted return: {ret:.9f}")
    print(f"final min separation: {final_sep:.4f} m")
    return 0


def _cmd_plot(args) -> int:
    from .plotting import plot
    plot(args.kind, args.infile, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_inspect_checkpoint(args) -> int:
    params = NetworkParams.load(args.infile)
    print(params.describe())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crowdnav",
                     description="Crowd navigation simulator, value-learning "
                                 "trainer and evaluation tools")
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("pretrain", help="collect ORCA demos and fit the value net")
    _add_common(sub)
    sub.add_argument("--out", default="runs/pretrain", help="output directory")
    sub.set_defaults(func=_cmd_pretrain)

    sub = subs.add_parser("train", help="full training pipeline")
    _add_common(sub)
    sub.add_argument("--out", default="runs/train", help="output directory")
    sub.add_argument("--init", help="checkpoint to start from (skips pre-training)")
    sub.set_defaults(func=_cmd_train)

    sub = subs.add_parser("eval", help="run a seeded evaluation battery")
    _add_common(sub)
    sub.add_argument("--policy", default="ORCA",
                     help="ORCA | APG_RL | APG_CRL | APG_CARL")
    sub.add_argument("--episodes", type=int, default=500)
    sub.add_argument("--peds", type=int, help="override pedestrian count")
    sub.add_argument("--checkpoint", help="value-net checkpoint for learned policies")
    sub.add_argument("--out", default="results/eval", help="output directory")
    sub.set_defaults(func=_cmd_eval)

    sub = subs.add_parser("sweep", help="evaluate across pedestrian counts")
    _add_common(sub)
    sub.add_argument("--policy", default="APG_RL")
    sub.add_argument("--episodes", type=int, default=500)
    sub.add_argument("--min-peds", type=int, default=3)
    sub.add_argument("--max-peds", type=int, default=8)
    sub.add_argument("--checkpoint", help="value-net checkpoint")
    sub.add_argument("--out", default="results/sweep", help="output directory")
    sub.set_defaults(func=_cmd_sweep)

    sub = subs.add_parser("replay", help="recompute metrics from a trajectory file")
    _add_common(sub)
    sub.add_argument("--in", dest="infile", required=True, help="trajectory CSV")
    sub.set_defaults(func=_cmd_replay)

    sub = subs.add_parser("plot", help="render a CSV artifact to SVG")
    _add_common(sub)
    sub.add_argument("--kind", required=True,
                     help="returns | trajectory | action_values")
    sub.add_argument("--in", dest="infile", required=True)
    sub.add_argument("--out", required=True, help="output SVG path")
    sub.set_defaults(func=_cmd_plot)

    sub = subs.add_parser("inspect-checkpoint", help="print checkpoint header")
    _add_common(sub)
    sub.add_argument("--in", dest="infile", required=True)
    sub.set_defaults(func=_cmd_inspect_checkpoint)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0


if __name__ == "__main__":
    sys.exit(main())
