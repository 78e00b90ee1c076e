"""Command line entry point for running experiments.

A run is configured by an optional JSON file plus flag overrides; results
land in the output directory as trace_<i>.jsonl, aggregate.csv (and
curve.csv for learning runs). Exit status: 0 on success, 1 if any trial
failed, 2 on configuration errors.
"""
from __future__ import annotations

import argparse
import sys

from .harness import (
    ConfigError,
    ExperimentConfig,
    run_experiment,
    run_learning_experiment,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="infoplan",
        description="Seeded search-and-recover experiments with scored transmissions.",
    )
    parser.add_argument("--config", help="JSON config file; flags override its fields")
    parser.add_argument("--domain", choices=["grid", "zones"])
    parser.add_argument("--n", type=int, help="grid side or zone count")
    parser.add_argument("--m", type=int, help="object count")
    parser.add_argument("--f", choices=["id", "sq", "log"], help="score shaping")
    parser.add_argument("--trials", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--mode", choices=["plan_known_rh", "learn"])
    parser.add_argument("--out", help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            cfg = ExperimentConfig.from_json_file(args.config)
        else:
            cfg = ExperimentConfig()
        cfg = cfg.with_overrides(
            domain=args.domain,
            n=args.n,
            m=args.m,
            f=args.f,
            trials=args.trials,
            seed=args.seed,
            mode=args.mode,
            out=args.out,
        )
    except (ConfigError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if cfg.mode == "learn":
        result = run_learning_experiment(cfg)
        last = result["rows"][-1]
        print(
            f"learning run: {cfg.trials} trials x {cfg.episodes} episodes -> "
            f"{result['out_dir']}/curve.csv (final score mean {last['score_mean']:.3f})"
        )
        return 0

    result = run_experiment(cfg)
    agg = result.aggregate
    print(
        f"{cfg.domain} n={cfg.n} m={cfg.m} f={cfg.f}: "
        f"score {agg['total_score_mean']:.3f}±{agg['total_score_std']:.3f}, "
        f"infos/step {agg['infos_per_timestep_mean']:.3f}, "
        f"env {agg['env_reward_mean']:.2f} "
        f"({agg['trials']} trials, {agg['failures']} failures) -> {result.out_dir}"
    )
    return 1 if result.failures else 0


if __name__ == "__main__":
    sys.exit(main())
