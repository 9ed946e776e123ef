#!/usr/bin/env python3
"""Selector ablation: success vs episode budget per selector and goal count.

Trains the horizon selector on random-selector rollouts first, then sweeps
fixed / random / similarity / horizon selectors over the parallel-goal
tasks.  Writes selector_ablation.csv under --out.
"""
import argparse

from craftbench.bench import RunConfig, ablate_selector, train_selector_pipeline
from craftbench.selector import TrainConfig


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--episodes", type=int, default=300, help="episodes per cell")
    parser.add_argument("--rollouts", type=int, default=500, help="training rollouts per task")
    parser.add_argument("--seed-base", type=int, default=5)
    parser.add_argument("--budgets", type=int, nargs="+", default=[600, 1000, 1500, 2500])
    parser.add_argument("--out", default="runs/selector")
    args = parser.parse_args()

    config = RunConfig(
        suite="ablation_tasks.json",
        world="ablation_world.json",
        skills="ablation_skills.json",
        episodes=args.episodes,
        seed_base=args.seed_base,
        output_dir=args.out,
    )
    model, records = train_selector_pipeline(
        config,
        rollout_episodes=args.rollouts,
        train_config=TrainConfig(epochs=300, learning_rate=3.0, seed=1),
    )
    print(f"trained horizon model on {len(records)} trajectory records")
    cells = ablate_selector(config, budgets=tuple(args.budgets), model=model)
    print(f"{'task':>12} {'goals':>5} {'selector':>10} {'budget':>6} {'rate':>6} {'steps':>6}")
    for cell in cells:
        steps = cell["mean_steps_success"]
        print(
            f"{cell['task']:>12} {cell['goals']:>5} {cell['selector']:>10} "
            f"{cell['budget']:>6} {cell['success_rate']:>6.3f} "
            f"{'-' if steps is None else format(steps, '6.0f')}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
