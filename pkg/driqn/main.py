"""CLI entry point: train, eval, compare, render, curves."""
from __future__ import annotations
import argparse
import json
import logging
import sys
import traceback
from pathlib import Path

from .agents import NetworkPolicy, planner_policy
from .checkpoint import CheckpointError, read_checkpoint, read_header
from .config import AgentKind, RunConfig, config_from_dict, config_hash, load_config
from .evaluation import CompareError, MetricsLog, compare, evaluate, learning_curves, write_episodes
from .qnet import NumericalFault
from .render import render_learning_curves, render_trajectories
from .trainer import train, write_run_metadata
from .types import ConfigError
from .world import observation_dim

log = logging.getLogger("driqn")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driqn",
        description="Distributionally robust implicit quantile networks for noisy USV navigation",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    parser.add_argument("--version", action="version", version="driqn 0.1.0")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="Train one agent for one or all configured seeds")
    p.add_argument("--config", required=True, help="YAML run config")
    p.add_argument("--seed", type=int, default=None, help="Train this seed only")
    p.add_argument("--out", default="runs", help="Parent directory for run directories")

    p = sub.add_parser("eval", help="Evaluate a checkpoint or a classical planner")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--checkpoint", help="Checkpoint file written by train")
    source.add_argument("--agent", choices=[AgentKind.APF.value, AgentKind.BUG.value],
                        help="Planner to evaluate without a checkpoint")
    p.add_argument("--config", default=None, help="YAML run config (planners; optional for checkpoints)")
    p.add_argument("--out", default=None, help="Write a run directory with metrics and trajectories")

    p = sub.add_parser("compare", help="Summarize final metrics of completed runs")
    p.add_argument("runs", nargs="+", help="Run directories")
    p.add_argument("--out", required=True, help="CSV summary table")

    p = sub.add_parser("render", help="Render logged trajectories as SVG")
    p.add_argument("--run", required=True, help="Run directory")
    p.add_argument("--episodes", type=int, nargs="*", default=[], help="Episode indices")
    p.add_argument("--step", type=int, default=None, help="Evaluation step (default: latest)")
    p.add_argument("--out", default=None, help="Output directory (default: <run>/renders)")

    p = sub.add_parser("curves", help="Render smoothed learning curves as SVG")
    p.add_argument("runs", nargs="+", help="Run directories")
    p.add_argument("--out", required=True, help="SVG file")
    p.add_argument("--weight", type=float, default=0.6, help="EMA smoothing weight")
    return parser


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="[driqn] %(levelname)s %(name)s: %(message)s",
        force=True,
    )


# ── verbs ──

def cmd_train(args) -> None:
    cfg = load_config(args.config)
    seeds = [args.seed] if args.seed is not None else list(cfg.seeds)
    out = Path(args.out)
    for seed in seeds:
        run_dir = out / f"{cfg.agent.value}_{cfg.strategy.value}_{cfg.noise.intensity:g}_seed{seed}"
        train(cfg, seed, run_dir)
        print(f"[driqn] Run complete: {run_dir}")


def _checkpoint_config(args) -> tuple[RunConfig, dict]:
    header = read_header(Path(args.checkpoint).read_bytes())
    meta = header.get("metadata")
    if not isinstance(meta, dict):
        raise CheckpointError("malformed header (no metadata)", path=args.checkpoint)
    if args.config is not None:
        cfg = load_config(args.config)
    elif "config" in meta:
        cfg = config_from_dict(meta["config"])
    else:
        raise ConfigError("checkpoint carries no config; pass --config", "config")
    return cfg, meta


def cmd_eval(args) -> None:
    if args.checkpoint is not None:
        if not Path(args.checkpoint).exists():
            raise CheckpointError("file not found", path=args.checkpoint)
        cfg, meta = _checkpoint_config(args)
        params, meta, _ = read_checkpoint(args.checkpoint, obs_dim=observation_dim(cfg.world),
                                          config_hash=config_hash(cfg))
        policy = NetworkPolicy(params, cfg)
        seed, step_ = meta.get("seed", -1), meta.get("step", 0)
    else:
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = cfg.replace(agent=AgentKind(args.agent))
        policy = planner_policy(cfg)
        seed, step_ = -1, 0

    record, episodes = evaluate(policy, cfg)
    print(f"[driqn] {cfg.agent.value} ({cfg.strategy.value}) over {len(episodes)} environments")
    for name, value in record.as_row().items():
        print(f"  {name:<4} {'--' if value is None else f'{value:.4f}'}")
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_run_metadata(out, cfg, seed)
        MetricsLog(out / "metrics.csv").append(step_, record)
        write_episodes(episodes, out / "trajectories" / f"step_{step_}")
        print(f"[driqn] Wrote {out}")


def cmd_compare(args) -> None:
    table = compare(args.runs)
    table.to_csv(args.out)
    print(table.format())
    print(f"[driqn] Wrote {args.out}")


def cmd_render(args) -> None:
    paths = render_trajectories(args.run, args.episodes, args.out, args.step)
    for path in paths:
        print(f"[driqn] Wrote {path}")


def cmd_curves(args) -> None:
    curves = learning_curves(args.runs, weight=args.weight)
    path = render_learning_curves(curves, args.out)
    print(f"[driqn] Wrote {path}")


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "render": cmd_render,
    "curves": cmd_curves,
}


def run(argv: list[str] | None = None) -> int:
    """Dispatch a command and map failures onto exit codes."""
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        COMMANDS[args.command](args)
    except (ConfigError, CheckpointError, CompareError) as e:
        print(f"\n[driqn] Error: {e}")
        return EXIT_CONFIG
    except NumericalFault as e:
        print(f"\n[driqn] Numerical fault: {e}")
        if e.layer:
            print(f"  layer: {e.layer}")
        if e.dump:
            print(f"  dump: {json.dumps(e.dump, default=str)}")
        return EXIT_NUMERICAL
    except Exception as e:
        print(f"\n[driqn] Internal Error: {e}")
        traceback.print_exc()
        return EXIT_FAILURE
    return EXIT_OK


def main(argv: list[str] | None = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
