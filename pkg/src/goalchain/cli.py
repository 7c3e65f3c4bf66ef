"""Command-line entry points.

Exit codes: 0 success, 2 configuration or input error, 3 planning failure,
4 numerical divergence. Set GOALCHAIN_VERBOSE=1 for progress output.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import asdict

import numpy as np

from . import __version__
from .configio import ConfigError, load_train_config, maze_name_from_config, resolve_maze
from .demo import (
    ParseError,
    PlanningFailed,
    extract_goals,
    load_demonstration,
    rrt_plan,
    save_demonstration,
    save_goal_sequence,
)
from .training import (
    NumericalDivergence,
    evaluate,
    export_value_grid,
    load_checkpoint,
    run_training,
    save_checkpoint,
    write_metrics_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PLANNING = 3
EXIT_DIVERGENCE = 4

THETA_SET = (0.0, math.pi / 2, math.pi, -math.pi / 2)


def _verbose() -> bool:
    return os.environ.get("GOALCHAIN_VERBOSE", "") not in ("", "0")


def _say(msg: str) -> None:
    if _verbose():
        print(msg, file=sys.stderr, flush=True)


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def cmd_generate_demo(args) -> int:
    maze = resolve_maze(args.maze)
    demo = rrt_plan(maze, maze.start, maze.target, maze.target_radius,
                    rng_seed=args.seed)
    save_demonstration(demo, args.out)
    xy = np.array([(s.x, s.y) for s in demo.states])
    arc = float(np.hypot(*(xy[1:] - xy[:-1]).T).sum())
    summary = {
        "maze": args.maze,
        "seed": args.seed,
        "n_states": len(demo),
        "arc_length": arc,
        "target": list(maze.target),
        "target_radius": maze.target_radius,
    }
    with open(str(args.out) + ".plan.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print(f"wrote {len(demo)} states (arc length {arc:.2f}) to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    config, config_text = load_train_config(args.config)
    maze_spec = args.maze or maze_name_from_config(args.config) or "canonical"
    maze = resolve_maze(maze_spec)
    demo = load_demonstration(args.demo)
    gseq = extract_goals(demo, config.eps_dist, config.eps_success)

    out = args.out
    os.makedirs(out, exist_ok=True)
    ckpt_dir = os.path.join(out, "checkpoints")
    os.makedirs(ckpt_dir, exist_ok=True)
    save_goal_sequence(gseq, os.path.join(out, "goal_sequence.json"))
    manifest = {
        "version": __version__,
        "command": "train",
        "seed": config.seed,
        "maze": maze_spec,
        "config": asdict(config),
        "config_text": config_text,
        "inputs": {
            "config_sha256": _sha256(args.config),
            "demo_sha256": _sha256(args.demo),
        },
        "outputs": ["metrics.csv", "summary.json", "checkpoint.npz",
                    "goal_sequence.json", "checkpoints/"],
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")

    params = config.dubins_params()

    def checkpoint_fn(step, agent):
        path = os.path.join(ckpt_dir, f"step_{step:08d}.npz")
        save_checkpoint(path, agent, maze, params, gseq,
                        extra={"step": step, "mode": config.mode})
        _say(f"checkpoint at step {step}")

    _say(f"training mode={config.mode} seed={config.seed} "
         f"n_goals={gseq.n_goals} budget={config.total_steps}")
    result = run_training(config, gseq, maze, checkpoint_fn=checkpoint_fn)

    write_metrics_csv(os.path.join(out, "metrics.csv"), result.metrics,
                      gseq.n_goals)
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(result.summary, fh, indent=2)
        fh.write("\n")
    save_checkpoint(os.path.join(out, "checkpoint.npz"), result.agent, maze,
                    params, gseq, extra={"step": result.summary["steps"],
                                         "mode": config.mode})
    print(f"trained {result.summary['steps']} steps, "
          f"first chain success: {result.summary['first_chain_success_step']}")
    return EXIT_OK


def cmd_eval(args) -> int:
    agent, maze, params, ckpt_gseq, _ = load_checkpoint(args.checkpoint)
    demo = load_demonstration(args.demo)
    gseq = extract_goals(demo, ckpt_gseq.eps_dist, ckpt_gseq.eps_success)
    report = evaluate(agent.policy_fn(), gseq, maze, params, t_max=args.t_max)
    print(f"goals_reached {report['goals_reached']}/{gseq.n_goals} "
          f"steps {report['steps']} chain_success {str(report['chain_success']).lower()}")
    return EXIT_OK


def cmd_value_map(args) -> int:
    agent, maze, params, gseq, _ = load_checkpoint(args.checkpoint)
    if not 1 <= args.index <= gseq.n_goals:
        raise ConfigError(f"index {args.index} not in [1, {gseq.n_goals}]")
    goal = gseq.goals[args.index - 1]
    paths = export_value_grid(agent, maze, args.index, goal, THETA_SET,
                              args.resolution, args.out)
    print(f"wrote {len(paths)} files to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="goalchain",
        description="Goal-chaining control from a single demonstration.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-demo",
                       help="plan a demonstration with a random tree")
    p.add_argument("--maze", default="canonical",
                   help="builtin maze name or maze config path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="demonstration CSV to write")
    p.set_defaults(fn=cmd_generate_demo)

    p = sub.add_parser("train", help="train an agent on a demonstration")
    p.add_argument("--config", required=True, help="run configuration (INI)")
    p.add_argument("--demo", required=True, help="demonstration CSV")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--maze", default=None,
                   help="override the maze named in the config")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="run one deterministic chain evaluation")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--demo", required=True)
    p.add_argument("--t-max", type=int, default=25)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("value-map", help="export critic value rasters")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resolution", type=int, default=50)
    p.set_defaults(fn=cmd_value_map)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except PlanningFailed as exc:
        print(f"planning failed: {exc}", file=sys.stderr)
        return EXIT_PLANNING
    except NumericalDivergence as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ConfigError, ParseError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
