"""The interactive episode loop: describe, explain, re-plan, select, act.

One episode: reset the world, get an initial plan, then repeatedly pick an
executable goal from the plan's frontier and run it.  On a precondition
failure (or after exhausting retries of a flaky skill) the agent describes
the situation, optionally explains the first violated precondition, and
asks the planner for a revised plan — consuming one feedback round.
Episodes end on task completion, step-budget exhaustion, or a stuck plan
with no rounds left.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np

from .describe import ExecTrace, describe
from .dsl import GoalCall, Plan, render_call
from .explain import Explanation
from .graph import GoalGraph, build_goal_graph
from .llm import EndpointError, PlanParseFailure
from .selector import TrajectoryRecord, executable_frontier, goal_key
from .world import Craftworld, TaskSpec, WorldState, task_done

PLAN_EXHAUSTED_NOTE = "I finish the plan, but the task is not complete."


class LoopMode(str, Enum):
    ONE_SHOT = "one_shot"          # plan once, execute blindly
    FEEDBACK_ONLY = "feedback"     # re-plan from descriptions, no explanation
    FULL_LOOP = "full"             # describe + explain + re-plan + select


@dataclass
class EpisodeResult:
    task_id: str
    success: bool
    steps_used: int
    rounds_used: int
    milestones: list[tuple[str, int]]
    final_inventory: dict[str, int]
    failure_cause: str | None = None
    seed: int = 0


def _effective_completed(graph: GoalGraph, completed: set[int]) -> set[int]:
    """Completed nodes plus members of satisfied OR groups."""
    effective = set(completed)
    for group in graph.or_groups:
        if group & completed:
            effective |= group
    return effective


def remap_completed(old: Plan, completed: set[int], new: Plan) -> set[int]:
    """Carry completion across a re-plan by (call, occurrence) identity."""
    done_keys: set[tuple[str, int]] = set()
    seen: dict[str, int] = {}
    for index, call in enumerate(old.steps, 1):
        key = render_call(call)
        occurrence = seen.get(key, 0)
        seen[key] = occurrence + 1
        if index in completed:
            done_keys.add((key, occurrence))
    carried: set[int] = set()
    seen = {}
    for index, call in enumerate(new.steps, 1):
        key = render_call(call)
        occurrence = seen.get(key, 0)
        seen[key] = occurrence + 1
        if (key, occurrence) in done_keys:
            carried.add(index)
    return carried


def _shrink(call: GoalCall, gained: int) -> GoalCall:
    if gained <= 0:
        return call
    remaining = max(call.count - gained, 1)
    return replace(call, outputs={call.item: remaining})


def run_episode(
    env: Craftworld,
    task: TaskSpec,
    seed: int,
    planner,
    selector,
    mode: LoopMode = LoopMode.FULL_LOOP,
    max_rounds: int = 64,
    retries: int = 2,
    budget: int | None = None,
    explainer: str = "rule",
    llm_client=None,
    trajectory_sink: Callable[[TrajectoryRecord], None] | None = None,
    event_sink: Callable[[dict], None] | None = None,
) -> EpisodeResult:
    """Run one seeded episode and return its result.

    ``(seed, configuration)`` fully determines the outcome: the world,
    the selector and the planner each draw from their own child stream of
    the episode seed.
    """
    seq = np.random.SeedSequence(seed)
    world_seed, selector_seed, planner_seed = (int(s) for s in seq.generate_state(3))
    state = env.reset(world_seed)
    selector_rng = np.random.default_rng(selector_seed)
    planner_rng = np.random.default_rng(planner_seed)
    budget = budget if budget is not None else task.max_episode_steps

    def emit(event: dict) -> None:
        if event_sink is not None:
            event_sink(event)

    try:
        plan = planner.initial_plan(task, state, planner_rng)
    except PlanParseFailure:
        return EpisodeResult(task.id, False, 0, 0, [], {}, "plan_unparseable", seed)
    except EndpointError:
        return EpisodeResult(task.id, False, 0, 0, [], {}, "endpoint_error", seed)
    graph = build_goal_graph(plan, env, task.alternatives)
    emit({"event": "plan", "round": 0, "steps": len(plan.steps)})

    completed: set[int] = set()
    succeeded_buffer: list[int] = []
    node_gains: dict[int, int] = {}
    attempts: dict[int, int] = {}
    pending_snapshots: dict[int, list[tuple[int, dict, str, float]]] = {}
    milestones: list[tuple[str, int]] = []
    seen_milestones: set[str] = set()
    rounds_used = 0

    def record_milestones(delta: dict[str, int]) -> None:
        for item, change in delta.items():
            if change > 0 and item not in seen_milestones:
                seen_milestones.add(item)
                milestones.append((item, state.steps_elapsed))

    def finish(success: bool, cause: str | None) -> EpisodeResult:
        return EpisodeResult(
            task.id,
            success,
            state.steps_elapsed,
            rounds_used,
            milestones,
            dict(state.inventory),
            cause,
            seed,
        )

    def flush_describe(trace: ExecTrace, extra_note: str | None = None) -> str:
        text = describe(state, trace)
        if extra_note:
            text = f"{text}\n{extra_note}" if text else extra_note
        emit({"event": "describe", "round": trace.round_id, "text": text})
        return text

    def do_replan(trace: ExecTrace, explanation: Explanation | None, description: str) -> bool:
        """One feedback round; returns False when the planner broke down."""
        nonlocal plan, graph, completed, rounds_used, node_gains, attempts, pending_snapshots
        rounds_used += 1
        passed = explanation if mode is LoopMode.FULL_LOOP else None
        if passed is not None:
            emit({"event": "explain", "round": trace.round_id, "text": passed.render()})
        try:
            new_plan = planner.replan(task, state, trace, passed, description=description)
        except PlanParseFailure:
            emit({"event": "replan_failed", "round": trace.round_id})
            return True  # round consumed; re-prompt on the next event
        except EndpointError:
            return False
        completed = remap_completed(plan, completed, new_plan)
        plan = new_plan
        graph = build_goal_graph(plan, env, task.alternatives)
        node_gains = {}
        attempts = {}
        pending_snapshots = {}
        emit({"event": "plan", "round": rounds_used, "steps": len(plan.steps)})
        return True

    def rule_explanation(node: int, call: GoalCall) -> Explanation | None:
        result = env.check_preconditions(state, call)
        if result is not None:
            result.step_index = node
        return result

    while True:
        if task_done(state, task):
            trace = ExecTrace(list(succeeded_buffer), None, rounds_used, finished=True)
            description = flush_describe(trace)
            if hasattr(planner, "note_completion"):
                planner.note_completion(description)
            return finish(True, None)
        if state.steps_elapsed >= budget:
            return finish(False, "budget_exhausted")

        effective = _effective_completed(graph, completed)
        frontier = executable_frontier(graph, state, env, completed)
        if not frontier:
            incomplete = [n for n in graph.nodes if n not in effective]
            if not incomplete:
                trace = ExecTrace(list(succeeded_buffer), None, rounds_used)
                explanation = None
                description = flush_describe(trace, PLAN_EXHAUSTED_NOTE)
            else:
                blocked = min(
                    (n for n in incomplete if set(graph.parents[n]) <= effective),
                    default=min(incomplete),
                )
                call = plan.step(blocked)
                trace = ExecTrace(
                    list(succeeded_buffer), (blocked, render_call(call)), rounds_used
                )
                explanation = rule_explanation(blocked, call)
                if explainer == "llm" and llm_client is not None and explanation is not None:
                    from .llm import explain_llm

                    try:
                        explanation = explain_llm(
                            llm_client,
                            getattr(planner, "transcript", None) or _empty_transcript(),
                            trace.failed_step,
                            describe(state, trace),
                        )
                        explanation.step_index = blocked
                    except EndpointError:
                        explanation = rule_explanation(blocked, call)
                description = flush_describe(trace)
            if mode is LoopMode.ONE_SHOT or rounds_used >= max_rounds:
                return finish(False, "rounds_exhausted")
            succeeded_buffer = []
            if not do_replan(trace, explanation, description):
                return finish(False, "endpoint_error")
            continue

        node = selector.choose(frontier, graph, state, env, selector_rng)
        call = plan.step(node)
        if trajectory_sink is not None:
            pending_snapshots.setdefault(node, []).append(
                (
                    state.steps_elapsed,
                    dict(state.inventory),
                    state.biome,
                    env.goal_distance(state, call),
                )
            )
        emit({"event": "select", "node": node, "frontier": list(frontier)})

        remaining = _shrink(call, node_gains.get(node, 0))
        outcome = env.execute_goal(state, remaining, budget)
        node_gains[node] = node_gains.get(node, 0) + max(
            outcome.items_delta.get(call.item, 0), 0
        )
        record_milestones(outcome.items_delta)
        emit(
            {
                "event": "execute",
                "node": node,
                "success": outcome.success,
                "steps": outcome.steps_used,
            }
        )

        if outcome.success:
            completed.add(node)
            succeeded_buffer.append(node)
            attempts.pop(node, None)
            if trajectory_sink is not None:
                for t, inventory, biome, distance in pending_snapshots.pop(node, []):
                    trajectory_sink(
                        TrajectoryRecord(
                            episode=f"{task.id}#{seed}",
                            t=t,
                            biome=biome,
                            inventory=inventory,
                            goal=goal_key(call),
                            distance=distance,
                            horizon=state.steps_elapsed - t,
                        )
                    )
            continue
        if outcome.budget_exhausted:
            return finish(False, "budget_exhausted")
        if outcome.failure is None:
            # flaky skill, not a planning error: retry before reporting
            attempts[node] = attempts.get(node, 0) + 1
            if attempts[node] <= retries:
                continue
        trace = ExecTrace(
            list(succeeded_buffer), (node, render_call(call)), rounds_used
        )
        explanation = outcome.failure
        if explanation is not None:
            explanation.step_index = node
        description = flush_describe(trace)
        if mode is LoopMode.ONE_SHOT or rounds_used >= max_rounds:
            return finish(False, "rounds_exhausted")
        succeeded_buffer = []
        attempts.pop(node, None)
        if not do_replan(trace, explanation, description):
            return finish(False, "endpoint_error")


def _empty_transcript():
    from .llm import PromptTranscript

    return PromptTranscript()
