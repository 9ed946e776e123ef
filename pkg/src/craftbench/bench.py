"""Benchmark harness: task suites, Monte-Carlo evaluation, ablations.

Runs are reproducible down to the byte: every episode derives its own RNG
streams from ``(seed_base, task index, episode index)``, results are merged
in seed order regardless of worker count, and report emitters share one
number formatter so the CSV and markdown views always agree.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .agent import EpisodeResult, LoopMode, run_episode
from .planner import FaultConfig, FaultyPlanner, OraclePlanner, oracle_plan
from .selector import (
    HorizonModel,
    TrainConfig,
    TrajectoryRecord,
    make_selector,
    train_horizon,
)
from .world import (
    Craftworld,
    TaskSpec,
    load_recipes,
    load_skills,
    load_tasks,
    load_world_config,
)

ROUNDS_LADDER = (0, 1, 3, 5, 64)  # 64 stands in for "unlimited"


@dataclass
class RunConfig:
    suite: str = "tasks.json"
    world: str = "world.json"
    recipes: str = "recipes.json"
    skills: str = "skills.json"
    episodes: int = 30
    seed_base: int = 0
    mode: str = "full"
    max_rounds: int = 64
    selector: str = "fixed"
    planner: str = "oracle"
    retries: int = 2
    fault: dict = field(default_factory=dict)
    parallelism: int = 1
    budget_override: int | None = None
    model_checkpoint: str | None = None
    train_selector: bool = False
    output_dir: str = "runs/out"

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError(f"episodes must be >= 1, got {self.episodes}")
        if self.parallelism < 1:
            raise ValueError(f"parallelism must be >= 1, got {self.parallelism}")

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        data = json.loads(Path(path).read_text())
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        rounds = data.get("max_rounds")
        if rounds in ("inf", "unlimited", None) and "max_rounds" in data:
            data = {**data, "max_rounds": 64}
        return cls(**{k: v for k, v in data.items() if k in known})

    def to_dict(self) -> dict:
        return asdict(self)


def build_env(config: RunConfig) -> Craftworld:
    return Craftworld(
        load_world_config(config.world),
        load_recipes(config.recipes),
        load_skills(config.skills),
    )


def episode_seed(seed_base: int, task_index: int, episode_index: int) -> int:
    seq = np.random.SeedSequence([seed_base, task_index, episode_index])
    return int(seq.generate_state(1)[0])


def _make_planner(config: RunConfig, env: Craftworld):
    if config.planner == "oracle":
        return OraclePlanner(env)
    if config.planner == "faulty":
        return FaultyPlanner(env, FaultConfig(**config.fault))
    if config.planner == "llm":
        from .llm import ChatClient, LLMPlanner

        return LLMPlanner(ChatClient.from_env())
    raise ValueError(f"unknown planner {config.planner!r}")


def _load_model(config: RunConfig) -> HorizonModel | None:
    if config.model_checkpoint:
        return HorizonModel.load(config.model_checkpoint)
    return None


_ENV_CACHE: dict[tuple, Craftworld] = {}


def _cached_env(config: RunConfig) -> Craftworld:
    key = (config.world, config.recipes, config.skills)
    if key not in _ENV_CACHE:
        _ENV_CACHE[key] = build_env(config)
    return _ENV_CACHE[key]


def _run_one(payload: dict) -> dict:
    config = RunConfig.from_dict(payload["config"])
    task = TaskSpec.from_json(payload["task"])
    env = _cached_env(config)
    planner = _make_planner(config, env)
    selector = make_selector(config.selector, _load_model(config))
    trajectories: list[TrajectoryRecord] = []
    sink = trajectories.append if payload.get("collect_trajectories") else None
    result = run_episode(
        env,
        task,
        payload["seed"],
        planner,
        selector,
        mode=LoopMode(config.mode),
        max_rounds=config.max_rounds,
        retries=config.retries,
        budget=config.budget_override,
        trajectory_sink=sink,
    )
    row = {
        "type": "episode",
        "task": result.task_id,
        "meta_group": task.meta_group,
        "episode": payload["episode"],
        "seed": result.seed,
        "success": result.success,
        "steps": result.steps_used,
        "rounds": result.rounds_used,
        "milestones": [[item, step] for item, step in result.milestones],
        "failure": result.failure_cause,
    }
    if sink is not None:
        row["trajectories"] = [r.to_json() for r in trajectories]
    return row


def run_episodes(
    config: RunConfig,
    tasks: list[TaskSpec],
    collect_trajectories: bool = False,
) -> list[dict]:
    """All (task, episode) cells, merged in seed order."""
    payloads = []
    for task_index, task in enumerate(tasks):
        for episode in range(config.episodes):
            payloads.append(
                {
                    "config": config.to_dict(),
                    "task": {
                        "id": task.id,
                        "target": task.target,
                        "max_episode_steps": task.max_episode_steps,
                        "meta_group": task.meta_group,
                        "prompt": task.prompt,
                        "alternatives": task.alternatives,
                    },
                    "seed": episode_seed(config.seed_base, task_index, episode),
                    "episode": episode,
                    "task_index": task_index,
                    "collect_trajectories": collect_trajectories,
                }
            )
    if config.parallelism > 1 and config.planner != "llm":
        with ProcessPoolExecutor(max_workers=config.parallelism) as pool:
            rows = list(pool.map(_run_one, payloads, chunksize=8))
    else:
        rows = [_run_one(p) for p in payloads]
    keyed = sorted(zip(payloads, rows), key=lambda pair: (pair[0]["task_index"], pair[0]["episode"]))
    return [row for _, row in keyed]


# ----------------------------------------------------------------------
# statistics

def binomial_ci(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return (0.0, 0.0)
    p = successes / n
    half = z * math.sqrt(p * (1 - p) / n)
    return (max(0.0, p - half), min(1.0, p + half))


def two_proportion_z(successes_a: int, n_a: int, successes_b: int, n_b: int) -> tuple[float, float]:
    """z statistic and one-sided p-value for P(a) > P(b)."""
    if n_a == 0 or n_b == 0:
        return 0.0, 1.0
    pa, pb = successes_a / n_a, successes_b / n_b
    pooled = (successes_a + successes_b) / (n_a + n_b)
    var = pooled * (1 - pooled) * (1 / n_a + 1 / n_b)
    if var == 0:
        return 0.0, 1.0
    z = (pa - pb) / math.sqrt(var)
    p = 0.5 * math.erfc(z / math.sqrt(2))
    return z, p


def welch_t(a: list[float], b: list[float]) -> tuple[float, float]:
    """t statistic and one-sided normal-approx p-value for mean(a) < mean(b)."""
    if len(a) < 2 or len(b) < 2:
        return 0.0, 1.0
    xa, xb = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    va, vb = xa.var(ddof=1) / len(xa), xb.var(ddof=1) / len(xb)
    if va + vb == 0:
        return 0.0, 1.0
    t = (xb.mean() - xa.mean()) / math.sqrt(va + vb)
    p = 0.5 * math.erfc(t / math.sqrt(2))
    return float(t), float(p)


# ----------------------------------------------------------------------
# reports

def _fmt(value: float, places: int = 2) -> str:
    return f"{value:.{places}f}"


@dataclass
class ReportRow:
    task: str
    meta_group: str
    episodes: int
    success_rate: float  # percent
    success_stddev: float
    mean_steps: float
    mean_rounds: float
    funnel: list[tuple[str, float]]

    def cells(self) -> dict[str, str]:
        return {
            "task": self.task,
            "meta_group": self.meta_group,
            "episodes": str(self.episodes),
            "success_rate": _fmt(self.success_rate),
            "success_stddev": _fmt(self.success_stddev),
            "mean_steps": _fmt(self.mean_steps, 1),
            "mean_rounds": _fmt(self.mean_rounds),
            "milestone_funnel": "; ".join(f"{item}={_fmt(rate)}" for item, rate in self.funnel),
        }


def task_funnel_items(env: Craftworld, task: TaskSpec) -> list[str]:
    """Canonical milestone chain for a task from an empty inventory."""
    state = env.reset(0, biome=env.config.biomes[0])
    state.inventory = {}
    try:
        plan = oracle_plan(task, env, state)
    except Exception:
        return []
    return plan.milestones()


def summarize(env: Craftworld, tasks: list[TaskSpec], rows: list[dict]) -> list[ReportRow]:
    report: list[ReportRow] = []
    for task in tasks:
        episode_rows = [r for r in rows if r["type"] == "episode" and r["task"] == task.id]
        if not episode_rows:
            continue
        flags = [1.0 if r["success"] else 0.0 for r in episode_rows]
        n = len(flags)
        mean = sum(flags) / n
        stddev = math.sqrt(sum((f - mean) ** 2 for f in flags) / (n - 1)) if n > 1 else 0.0
        funnel_items = task_funnel_items(env, task)
        funnel = []
        for item in funnel_items:
            reached = sum(1 for r in episode_rows if any(m[0] == item for m in r["milestones"]))
            funnel.append((item, reached / n))
        report.append(
            ReportRow(
                task=task.id,
                meta_group=task.meta_group,
                episodes=n,
                success_rate=100.0 * mean,
                success_stddev=100.0 * stddev,
                mean_steps=sum(r["steps"] for r in episode_rows) / n,
                mean_rounds=sum(r["rounds"] for r in episode_rows) / n,
                funnel=funnel,
            )
        )
    return report


CSV_COLUMNS = [
    "task",
    "meta_group",
    "episodes",
    "success_rate",
    "success_stddev",
    "mean_steps",
    "mean_rounds",
    "milestone_funnel",
]


def write_reports(out_dir: Path, report: list[ReportRow], rows: list[dict]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "report.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in report:
            writer.writerow(row.cells())

    lines = ["# Suite report", ""]
    header = "| " + " | ".join(CSV_COLUMNS) + " |"
    sep = "|" + "|".join(["---"] * len(CSV_COLUMNS)) + "|"
    lines += [header, sep]
    for row in report:
        cells = row.cells()
        lines.append("| " + " | ".join(cells[c] for c in CSV_COLUMNS) + " |")
    groups: dict[str, list[ReportRow]] = {}
    for row in report:
        groups.setdefault(row.meta_group, []).append(row)
    lines += ["", "## By meta group", "", "| meta_group | tasks | success_rate |", "|---|---|---|"]
    for group in sorted(groups):
        members = groups[group]
        rate = sum(r.success_rate for r in members) / len(members)
        lines.append(f"| {group} | {len(members)} | {_fmt(rate)} |")
    (out_dir / "report.md").write_text("\n".join(lines) + "\n")

    with (out_dir / "results.jsonl").open("w") as fh:
        for row in rows:
            slim = {k: v for k, v in row.items() if k != "trajectories"}
            fh.write(json.dumps(slim, sort_keys=True) + "\n")
        by_task: dict[str, list[dict]] = {}
        for row in rows:
            if row["type"] == "episode":
                by_task.setdefault(row["task"], []).append(row)
        for task_id in sorted(by_task):
            episode_rows = by_task[task_id]
            wins = sum(1 for r in episode_rows if r["success"])
            low, high = binomial_ci(wins, len(episode_rows))
            fh.write(
                json.dumps(
                    {
                        "type": "summary",
                        "task": task_id,
                        "episodes": len(episode_rows),
                        "successes": wins,
                        "ci95": [round(low, 6), round(high, 6)],
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def run_suite(config: RunConfig) -> list[ReportRow]:
    env = build_env(config)
    tasks = load_tasks(config.suite)
    rows = run_episodes(config, tasks)
    report = summarize(env, tasks, rows)
    out_dir = Path(config.output_dir)
    write_reports(out_dir, report, rows)
    trajectory_rows = [r for r in rows if "trajectories" in r]
    if trajectory_rows:
        with (out_dir / "trajectories.jsonl").open("w") as fh:
            for row in trajectory_rows:
                for record in row["trajectories"]:
                    fh.write(json.dumps(record, sort_keys=True) + "\n")
    return report


# ----------------------------------------------------------------------
# ablations

def ablate_rounds(config: RunConfig, ladder: tuple[int, ...] = ROUNDS_LADDER) -> dict:
    """Success rates per meta group across the feedback-rounds ladder.

    Shared seeds per setting: only the rounds budget varies, so per-seed
    outcomes are directly comparable.
    """
    tasks = load_tasks(config.suite)
    per_rounds: dict[int, list[dict]] = {}
    for rounds in ladder:
        cfg = RunConfig.from_dict({**config.to_dict(), "max_rounds": rounds})
        per_rounds[rounds] = run_episodes(cfg, tasks)

    groups = sorted({t.meta_group for t in tasks})
    grid: dict[str, dict[int, float]] = {g: {} for g in groups}
    for rounds, rows in per_rounds.items():
        for group in groups:
            flags = [
                1.0 if r["success"] else 0.0
                for r in rows
                if r["type"] == "episode" and r["meta_group"] == group
            ]
            grid[group][rounds] = 100.0 * sum(flags) / len(flags) if flags else 0.0

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    columns = ["meta_group"] + [str(r) for r in ladder] + ["delta"]
    with (out_dir / "rounds_ablation.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for group in groups:
            values = [grid[group][r] for r in ladder]
            writer.writerow([group] + [_fmt(v) for v in values] + [_fmt(values[-1] - values[0])])

    def seeds_of(rows: list[dict]) -> set[tuple[str, int]]:
        return {(r["task"], r["seed"]) for r in rows if r["type"] == "episode" and r["success"]}

    first, last = ladder[0], ladder[-1]
    summary = {
        "ladder": list(ladder),
        "grid": {g: {str(r): grid[g][r] for r in ladder} for g in groups},
        "totals": {
            str(r): sum(1 for row in per_rounds[r] if row["type"] == "episode" and row["success"])
            for r in ladder
        },
        "episodes_per_setting": sum(1 for row in per_rounds[first] if row["type"] == "episode"),
        "seed_inclusion": seeds_of(per_rounds[first]) <= seeds_of(per_rounds[last]),
    }
    n = summary["episodes_per_setting"]
    z, p = two_proportion_z(summary["totals"][str(last)], n, summary["totals"][str(first)], n)
    summary["z"] = z
    summary["p_one_sided"] = p
    (out_dir / "rounds_ablation.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary


def ablate_selector(
    config: RunConfig,
    selectors: tuple[str, ...] = ("fixed", "random", "similarity", "hps"),
    budgets: tuple[int, ...] = (600, 1000, 1500, 2500),
    model: HorizonModel | None = None,
) -> list[dict]:
    """Success-rate-vs-budget cells for each selector and goal count."""
    tasks = load_tasks(config.suite)
    if model is None and "hps" in selectors:
        if config.model_checkpoint:
            model = HorizonModel.load(config.model_checkpoint)
        elif config.train_selector:
            model = train_selector_pipeline(config)[0]
        else:
            from .selector import MissingModel

            raise MissingModel("hps requested without a checkpoint or --train flag")

    cells: list[dict] = []
    for task in tasks:
        goal_count = max(len(v) for v in task.alternatives.values()) if task.alternatives else 1
        for selector_kind in selectors:
            for budget in budgets:
                cfg = RunConfig.from_dict(
                    {
                        **config.to_dict(),
                        "selector": selector_kind,
                        "budget_override": budget,
                    }
                )
                env = _cached_env(cfg)
                planner = OraclePlanner(env)
                chooser = make_selector(selector_kind, model)
                successes, steps_on_success = 0, []
                for episode in range(cfg.episodes):
                    seed = episode_seed(cfg.seed_base, tasks.index(task), episode)
                    result = run_episode(
                        env,
                        task,
                        seed,
                        planner,
                        chooser,
                        mode=LoopMode(cfg.mode),
                        max_rounds=cfg.max_rounds,
                        retries=cfg.retries,
                        budget=budget,
                    )
                    if result.success:
                        successes += 1
                        steps_on_success.append(result.steps_used)
                cells.append(
                    {
                        "task": task.id,
                        "goals": goal_count,
                        "selector": selector_kind,
                        "budget": budget,
                        "episodes": cfg.episodes,
                        "successes": successes,
                        "success_rate": successes / cfg.episodes,
                        "mean_steps_success": (
                            sum(steps_on_success) / len(steps_on_success)
                            if steps_on_success
                            else None
                        ),
                        "steps_success": steps_on_success,
                    }
                )
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "selector_ablation.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task", "goals", "selector", "budget", "episodes", "success_rate", "mean_steps_success"])
        for cell in cells:
            writer.writerow(
                [
                    cell["task"],
                    cell["goals"],
                    cell["selector"],
                    cell["budget"],
                    cell["episodes"],
                    _fmt(cell["success_rate"], 4),
                    "" if cell["mean_steps_success"] is None else _fmt(cell["mean_steps_success"], 1),
                ]
            )
    return cells


def train_selector_pipeline(
    config: RunConfig,
    rollout_episodes: int | None = None,
    train_config: TrainConfig | None = None,
    generous_budget: int = 4000,
) -> tuple[HorizonModel, list[TrajectoryRecord]]:
    """Random-selector rollouts -> trajectory log -> trained checkpoint."""
    tasks = load_tasks(config.suite)
    env = build_env(config)
    planner = OraclePlanner(env)
    chooser = make_selector("random")
    episodes = rollout_episodes or max(config.episodes, 200)
    records: list[TrajectoryRecord] = []
    for task_index, task in enumerate(tasks):
        for episode in range(episodes):
            seed = episode_seed(config.seed_base + 7_777, task_index, episode)
            run_episode(
                env,
                task,
                seed,
                planner,
                chooser,
                mode=LoopMode(config.mode),
                max_rounds=config.max_rounds,
                retries=config.retries,
                budget=generous_budget,
                trajectory_sink=records.append,
            )
    model = train_horizon(records, train_config or TrainConfig())
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "trajectories.jsonl").open("w") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")
    if config.model_checkpoint:
        model.save(config.model_checkpoint)
    else:
        model.save(out_dir / "horizon_model.json")
    return model, records
