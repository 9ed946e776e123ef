"""Command-line harness.

Subcommands::

    craftbench plan parse|render|validate <file>
    craftbench episode run [--task ... --seed ...]
    craftbench suite run [--config cfg.json] [overrides]
    craftbench ablate rounds|selector [--config cfg.json]
    craftbench selector train [--episodes N --out model.json]
    craftbench llm mock-serve <transcript.json> [--port P]
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench
from .agent import LoopMode, run_episode
from .bench import RunConfig, build_env
from .dsl import PlanParseError, parse_plan, render_plan
from .planner import oracle_plan
from .selector import make_selector
from .world import load_tasks, symbolic_execute


def _load_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {
        key: value
        for key, value in vars(args).items()
        if key in RunConfig.__dataclass_fields__ and value is not None
    }
    return RunConfig.from_dict({**config.to_dict(), **overrides})


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON run configuration file")
    parser.add_argument("--suite")
    parser.add_argument("--world")
    parser.add_argument("--skills")
    parser.add_argument("--recipes")
    parser.add_argument("--episodes", type=int)
    parser.add_argument("--seed-base", dest="seed_base", type=int)
    parser.add_argument("--mode", choices=[m.value for m in LoopMode])
    parser.add_argument("--max-rounds", dest="max_rounds", type=int)
    parser.add_argument("--selector")
    parser.add_argument("--planner", choices=["oracle", "faulty", "llm"])
    parser.add_argument("--retries", type=int)
    parser.add_argument("--parallelism", type=int)
    parser.add_argument("--model-checkpoint", dest="model_checkpoint")
    parser.add_argument("--output-dir", dest="output_dir")


def cmd_plan(args) -> int:
    text = Path(args.file).read_text()
    try:
        plan = parse_plan(text)
    except PlanParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 1
    if args.action == "parse":
        print(
            json.dumps(
                {
                    "name": plan.name,
                    "return_item": plan.return_item,
                    "steps": [
                        {
                            "index": i,
                            "verb": c.verb.value,
                            "outputs": c.outputs,
                            "inputs": c.inputs,
                            "tool": c.tool,
                            "station": c.station,
                        }
                        for i, c in enumerate(plan.steps, 1)
                    ],
                },
                indent=2,
            )
        )
        return 0
    if args.action == "render":
        print(render_plan(plan), end="")
        return 0
    config = RunConfig() if not args.config else RunConfig.from_file(args.config)
    env = build_env(config)
    state = env.reset(0, biome=env.config.biomes[0])
    state.inventory = {}
    failure = symbolic_execute(env, state, plan)
    if failure is None:
        print("plan passes symbolic execution")
        return 0
    print(f"step {failure.step_index} fails: {failure.render()}", file=sys.stderr)
    return 1


def cmd_episode(args) -> int:
    config = _load_config(args)
    env = build_env(config)
    tasks = {t.id: t for t in load_tasks(config.suite)}
    if args.task not in tasks:
        print(f"unknown task {args.task!r}; have {sorted(tasks)}", file=sys.stderr)
        return 1
    task = tasks[args.task]
    planner = bench._make_planner(config, env)
    selector = make_selector(config.selector, bench._load_model(config))
    events: list[dict] = []
    result = run_episode(
        env,
        task,
        args.seed,
        planner,
        selector,
        mode=LoopMode(config.mode),
        max_rounds=config.max_rounds,
        retries=config.retries,
        budget=config.budget_override,
        event_sink=events.append,
    )
    out = {
        "task": result.task_id,
        "success": result.success,
        "steps_used": result.steps_used,
        "rounds_used": result.rounds_used,
        "milestones": result.milestones,
        "failure_cause": result.failure_cause,
    }
    print(json.dumps(out, indent=2))
    if args.events:
        Path(args.events).write_text("\n".join(json.dumps(e) for e in events) + "\n")
    return 0


def cmd_suite(args) -> int:
    config = _load_config(args)
    report = bench.run_suite(config)
    for row in report:
        cells = row.cells()
        print(
            f"{cells['task']:>16} {cells['meta_group']:>4} "
            f"{cells['success_rate']:>7}% ± {cells['success_stddev']}"
        )
    print(f"reports written to {config.output_dir}")
    return 0


def cmd_ablate(args) -> int:
    config = _load_config(args)
    if args.what == "rounds":
        summary = bench.ablate_rounds(config)
        for group, row in sorted(summary["grid"].items()):
            cells = " ".join(f"{rounds}:{rate:.1f}" for rounds, rate in row.items())
            print(f"{group:>5} {cells}")
        print(
            f"total {summary['totals']} z={summary['z']:.2f} "
            f"p={summary['p_one_sided']:.2g} inclusion={summary['seed_inclusion']}"
        )
        return 0
    cells = bench.ablate_selector(config)
    for cell in cells:
        steps = cell["mean_steps_success"]
        print(
            f"{cell['task']:>12} goals={cell['goals']} {cell['selector']:>10} "
            f"budget={cell['budget']:>5} rate={cell['success_rate']:.3f} "
            f"steps={'-' if steps is None else f'{steps:.0f}'}"
        )
    return 0


def cmd_selector_train(args) -> int:
    config = _load_config(args)
    if args.out:
        config = RunConfig.from_dict({**config.to_dict(), "model_checkpoint": args.out})
    model, records = bench.train_selector_pipeline(config, rollout_episodes=args.rollouts)
    meta = model.training_meta
    print(
        f"trained on {meta['records']} records from {len(records)} selections: "
        f"loss {meta['initial_loss']:.3f} -> {meta['final_loss']:.3f}"
    )
    return 0


def cmd_mock_serve(args) -> int:
    from .llm import MockChatServer

    server = MockChatServer.from_file(args.transcript, port=args.port)
    host, port = server.server.server_address[:2]
    print(f"serving canned replies on http://{host}:{port}/v1/chat/completions")
    try:
        server.server.serve_forever()
    except KeyboardInterrupt:
        server.server.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="craftbench")
    sub = parser.add_subparsers(dest="command", required=True)

    plan = sub.add_parser("plan", help="parse, render or validate a plan file")
    plan.add_argument("action", choices=["parse", "render", "validate"])
    plan.add_argument("file")
    plan.add_argument("--config")
    plan.set_defaults(func=cmd_plan)

    episode = sub.add_parser("episode", help="run a single episode")
    episode_sub = episode.add_subparsers(dest="action", required=True)
    episode_run = episode_sub.add_parser("run")
    episode_run.add_argument("--task", required=True)
    episode_run.add_argument("--seed", type=int, default=0)
    episode_run.add_argument("--events", help="write the episode event log here")
    _add_config_flags(episode_run)
    episode_run.set_defaults(func=cmd_episode)

    suite = sub.add_parser("suite", help="run a task suite")
    suite_sub = suite.add_subparsers(dest="action", required=True)
    suite_run = suite_sub.add_parser("run")
    _add_config_flags(suite_run)
    suite_run.set_defaults(func=cmd_suite)

    ablate = sub.add_parser("ablate", help="run an ablation grid")
    ablate.add_argument("what", choices=["rounds", "selector"])
    _add_config_flags(ablate)
    ablate.add_argument("--train", dest="train_selector", action="store_true", default=None)
    ablate.set_defaults(func=cmd_ablate)

    selector = sub.add_parser("selector", help="selector utilities")
    selector_sub = selector.add_subparsers(dest="action", required=True)
    train = selector_sub.add_parser("train")
    train.add_argument("--rollouts", type=int, default=None)
    train.add_argument("--out", help="checkpoint path")
    _add_config_flags(train)
    train.set_defaults(func=cmd_selector_train)

    llm = sub.add_parser("llm", help="LLM endpoint utilities")
    llm_sub = llm.add_subparsers(dest="action", required=True)
    serve = llm_sub.add_parser("mock-serve")
    serve.add_argument("transcript")
    serve.add_argument("--port", type=int, default=8099)
    serve.set_defaults(func=cmd_mock_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
