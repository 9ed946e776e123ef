#!/usr/bin/env python3
"""Run the default task suite and print the per-task report."""
import argparse

from craftbench.bench import RunConfig, run_suite


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--episodes", type=int, default=30)
    parser.add_argument("--seed-base", type=int, default=0)
    parser.add_argument("--planner", default="oracle", choices=["oracle", "faulty", "llm"])
    parser.add_argument("--selector", default="fixed")
    parser.add_argument("--max-rounds", type=int, default=64)
    parser.add_argument("--parallelism", type=int, default=1)
    parser.add_argument("--out", default="runs/suite")
    args = parser.parse_args()

    config = RunConfig(
        episodes=args.episodes,
        seed_base=args.seed_base,
        planner=args.planner,
        selector=args.selector,
        max_rounds=args.max_rounds,
        parallelism=args.parallelism,
        output_dir=args.out,
    )
    report = run_suite(config)
    print(f"{'task':>16} {'group':>5} {'success':>9} {'steps':>8} {'rounds':>6}")
    for row in report:
        print(
            f"{row.task:>16} {row.meta_group:>5} "
            f"{row.success_rate:8.2f}% {row.mean_steps:8.1f} {row.mean_rounds:6.2f}"
        )
    print(f"\nreports written to {config.output_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
