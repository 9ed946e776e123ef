#!/usr/bin/env python3
"""Feedback-rounds ablation: success rate per meta group over {0,1,3,5,64}.

The faulty planner injects each defect class with probability 0.5; seeds
are shared across ladder settings so per-seed outcomes stay comparable.
Writes rounds_ablation.csv / rounds_ablation.json under --out.
"""
import argparse

from craftbench.bench import RunConfig, ablate_rounds


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--episodes", type=int, default=42, help="episodes per task per setting")
    parser.add_argument("--seed-base", type=int, default=11)
    parser.add_argument("--fault-prob", type=float, default=0.5)
    parser.add_argument("--budget", type=int, default=12_000)
    parser.add_argument("--out", default="runs/rounds")
    args = parser.parse_args()

    config = RunConfig(
        planner="faulty",
        fault={
            "p_omit_tool_step": args.fault_prob,
            "p_under_quantity": args.fault_prob,
            "p_omit_station": args.fault_prob,
            "p_wrong_tool": args.fault_prob,
        },
        episodes=args.episodes,
        seed_base=args.seed_base,
        budget_override=args.budget,
        output_dir=args.out,
    )
    summary = ablate_rounds(config)
    print(f"{'group':>6} " + " ".join(f"{r:>7}" for r in summary['ladder']) + "   delta")
    for group, row in sorted(summary["grid"].items()):
        values = [row[str(r)] for r in summary["ladder"]]
        cells = " ".join(f"{v:7.2f}" for v in values)
        print(f"{group:>6} {cells} {values[-1] - values[0]:+7.2f}")
    print(
        f"\naggregate: {summary['totals']} of {summary['episodes_per_setting']} episodes; "
        f"z={summary['z']:.2f} p={summary['p_one_sided']:.2g} "
        f"seed-inclusion={summary['seed_inclusion']}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
