"""Plan producers: a backward-chaining oracle and a fault-injected twin.

The oracle expands the task target through the recipe and mine databases,
inserts tool and station acquisitions before first use, merges duplicate
requirements with exact batch arithmetic, nets off the starting inventory,
and emits steps in a first-discovered, dependencies-first order.

The faulty planner perturbs an oracle plan with characteristic planning
mistakes (missing tool or station steps, under-counted gathering, a
downgraded tool) and repairs exactly one explained defect per feedback
round, mirroring how a capable but imperfect plan writer behaves.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .describe import ExecTrace
from .dsl import GoalCall, GoalVerb, Plan
from .explain import Explanation, ExplanationKind
from .world import (
    PICKAXE_FOR_TIER,
    TIER_OF_PICKAXE,
    Craftworld,
    TaskSpec,
    ToolTier,
    WorldState,
)


class Unreachable(Exception):
    def __init__(self, item: str):
        super().__init__(f"no recipe, mine rule or creature produces {item}")
        self.item = item


@dataclass
class _Node:
    item: str
    kind: str  # "mine" | "craft" | "kill" | "alias"
    consume: int = 0
    possess: bool = False
    produced: int = 0
    batches: int = 0


def _discover(
    item: str,
    env: Craftworld,
    alternatives: dict[str, list[str]],
    nodes: dict[str, _Node],
    order: list[str],
    consumers: dict[str, list[str]],
    parents: dict[str, list[str]],
    visiting: set[str],
) -> None:
    if item in nodes:
        return
    if item in visiting:
        raise Unreachable(item)
    visiting.add(item)

    def need(producer: str, consumer: str) -> None:
        _discover(producer, env, alternatives, nodes, order, consumers, parents, visiting)
        if consumer not in consumers[producer]:
            consumers[producer].append(consumer)
            parents[consumer].append(producer)

    consumers.setdefault(item, [])
    parents.setdefault(item, [])
    if item in alternatives:
        node = _Node(item, "alias")
        nodes[item] = node
        for source in alternatives[item]:
            need(source, item)
    elif (recipe := env.recipes.for_item(item)) is not None:
        node = _Node(item, "craft")
        nodes[item] = node
        for input_item in recipe.inputs:
            need(input_item, item)
        if recipe.station:
            need(recipe.station, item)
    elif (rule := env.mine_rules.get(item)) is not None:
        node = _Node(item, "mine")
        nodes[item] = node
        if rule.required_tier > ToolTier.NONE:
            need(PICKAXE_FOR_TIER[rule.required_tier], item)
    elif item in env.mob_by_drop:
        nodes[item] = _Node(item, "kill")
    else:
        visiting.discard(item)
        raise Unreachable(item)
    visiting.discard(item)
    order.append(item)


def _emission_order(
    order: list[str], consumers: dict[str, list[str]], parents: dict[str, list[str]]
) -> list[str]:
    remaining = {item: len(parents[item]) for item in order}
    queue = deque(item for item in order if remaining[item] == 0)
    emitted: list[str] = []
    while queue:
        item = queue.popleft()
        emitted.append(item)
        for consumer in consumers[item]:
            remaining[consumer] -= 1
            if remaining[consumer] == 0:
                queue.append(consumer)
    return emitted


def oracle_plan(task: TaskSpec, env: Craftworld, state: WorldState) -> Plan:
    """Exact-quantity plan for the task target from the current state."""
    nodes: dict[str, _Node] = {}
    order: list[str] = []
    consumers: dict[str, list[str]] = {}
    parents: dict[str, list[str]] = {}
    for item in task.target:
        _discover(item, env, task.alternatives, nodes, order, consumers, parents, set())

    emitted = _emission_order(order, consumers, parents)

    # quantity pass, consumers first, netting the starting inventory
    pool = dict(state.inventory)

    def pool_take(item: str, wanted: int) -> int:
        got = min(pool.get(item, 0), wanted)
        if got:
            pool[item] = pool.get(item, 0) - got
        return got

    for item, count in task.target.items():
        if item in task.alternatives:
            remaining = count
            for source in task.alternatives[item]:
                remaining -= pool_take(source, remaining)
            nodes[item].consume += max(remaining, 0)
        else:
            nodes[item].consume += count

    for item in reversed(emitted):
        node = nodes[item]
        if node.kind == "alias":
            for source in task.alternatives[item]:
                nodes[source].consume += node.consume
            continue
        needed = node.consume + (1 if node.possess else 0)
        if needed <= 0:
            continue
        if node.possess and node.item in TIER_OF_PICKAXE and node.consume == 0:
            tier = max(
                (TIER_OF_PICKAXE[p] for p in TIER_OF_PICKAXE if pool.get(p, 0) > 0),
                default=ToolTier.NONE,
            )
            if tier >= TIER_OF_PICKAXE[node.item]:
                continue
        needed -= pool_take(item, needed)
        if needed <= 0:
            continue
        if node.kind == "craft":
            recipe = env.recipes.require(item)
            node.batches = math.ceil(needed / recipe.batch_size)
            node.produced = node.batches * recipe.batch_size
            for input_item, qty in recipe.inputs.items():
                nodes[input_item].consume += qty * node.batches
            if recipe.station:
                nodes[recipe.station].possess = True
        else:
            node.produced = needed
            if node.kind == "mine":
                rule = env.mine_rules[item]
                if rule.required_tier > ToolTier.NONE:
                    nodes[PICKAXE_FOR_TIER[rule.required_tier]].possess = True

    steps: list[GoalCall] = []
    for item in emitted:
        node = nodes[item]
        if node.kind == "alias" or node.produced <= 0:
            continue
        if node.kind == "mine":
            rule = env.mine_rules[item]
            tool = (
                PICKAXE_FOR_TIER[rule.required_tier]
                if rule.required_tier > ToolTier.NONE
                else None
            )
            steps.append(GoalCall(GoalVerb.MINE, {item: node.produced}, tool=tool))
        elif node.kind == "kill":
            steps.append(GoalCall(GoalVerb.KILL, {item: node.produced}))
        else:
            recipe = env.recipes.require(item)
            inputs = {i: qty * node.batches for i, qty in recipe.inputs.items()}
            steps.append(
                GoalCall(
                    GoalVerb.CRAFT,
                    {item: node.produced},
                    inputs=inputs,
                    station=recipe.station,
                )
            )

    target_item = next(iter(task.target))
    count = task.target[target_item]
    verb = "mine" if target_item in env.mine_rules else (
        "obtain" if target_item in task.alternatives else "craft"
    )
    name = f"{verb}_{count}_{target_item}"
    return Plan(name, steps, target_item)


class OraclePlanner:
    """Always re-plans from scratch against the live state."""

    name = "oracle"

    def __init__(self, env: Craftworld):
        self.env = env

    def initial_plan(self, task: TaskSpec, state: WorldState, rng: np.random.Generator) -> Plan:
        return oracle_plan(task, self.env, state)

    def replan(
        self,
        task: TaskSpec,
        state: WorldState,
        trace: ExecTrace,
        explanation: Explanation | None,
        description: str = "",
    ) -> Plan:
        return oracle_plan(task, self.env, state)


@dataclass
class FaultConfig:
    p_omit_tool_step: float = 0.0
    p_under_quantity: float = 0.0
    p_omit_station: float = 0.0
    p_wrong_tool: float = 0.0

    def __post_init__(self):
        for name in ("p_omit_tool_step", "p_under_quantity", "p_omit_station", "p_wrong_tool"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")


@dataclass
class _Defect:
    kind: str  # drop_tool | drop_station | under_quantity | wrong_tool | null_station
    item: str  # the oracle step this defect attaches to
    reduce_by: int = 0
    proper_tool: str = ""
    downgraded_tool: str | None = None
    station: str = ""
    active: bool = True


@dataclass
class _Patch:
    anchor_item: str  # insert before the step producing this item
    call: GoalCall = field(default=None)  # type: ignore[assignment]


class FaultyPlanner:
    """Oracle plan plus seeded defects; repairs one explained defect per round."""

    name = "faulty"

    def __init__(self, env: Craftworld, faults: FaultConfig):
        self.env = env
        self.faults = faults
        self._oracle: Plan | None = None
        self._defects: list[_Defect] = []
        self._patches: list[_Patch] = []
        self._current: Plan | None = None

    # -- defect rolling -------------------------------------------------
    def _roll_defects(self, plan: Plan, rng: np.random.Generator) -> list[_Defect]:
        tool_items = {c.tool for c in plan.steps if c.tool}
        station_items = {c.station for c in plan.steps if c.station}
        consumed = set()
        for c in plan.steps:
            consumed |= set(c.inputs)
        defects: list[_Defect] = []
        for call in plan.steps:
            item = call.item
            if item in tool_items and call.verb is GoalVerb.CRAFT:
                if rng.random() < self.faults.p_omit_tool_step:
                    defects.append(_Defect("drop_tool", item))
            if item in station_items and call.verb is GoalVerb.CRAFT:
                if rng.random() < self.faults.p_omit_station:
                    defects.append(_Defect("drop_station", item, station=item))
            if call.verb is GoalVerb.MINE and call.count >= 2 and item in consumed:
                if rng.random() < self.faults.p_under_quantity:
                    reduce_by = int(rng.integers(1, call.count))
                    defects.append(_Defect("under_quantity", item, reduce_by=reduce_by))
            if call.verb is GoalVerb.MINE and call.tool in TIER_OF_PICKAXE:
                tier = TIER_OF_PICKAXE[call.tool]
                if tier >= ToolTier.STONE and rng.random() < self.faults.p_wrong_tool:
                    downgraded = PICKAXE_FOR_TIER.get(ToolTier(tier - 1))
                    defects.append(
                        _Defect(
                            "wrong_tool",
                            item,
                            proper_tool=call.tool,
                            downgraded_tool=downgraded,
                        )
                    )
        for call in plan.steps:
            if call.station and call.verb is GoalVerb.CRAFT and call.item not in station_items:
                if rng.random() < self.faults.p_omit_station:
                    defects.append(_Defect("null_station", call.item, station=call.station))
        return defects

    # -- plan assembly ----------------------------------------------------
    def _dropped_items(self) -> set[str]:
        dropped: set[str] = set()
        for d in self._defects:
            if not d.active:
                continue
            if d.kind in ("drop_tool", "drop_station"):
                dropped.add(d.item)
            elif d.kind == "wrong_tool":
                dropped.add(d.proper_tool)
        return dropped

    def _materialize(self) -> Plan:
        assert self._oracle is not None
        dropped = self._dropped_items()
        steps: list[GoalCall] = []
        for call in self._oracle.steps:
            if call.item in dropped:
                continue
            new = replace(call, outputs=dict(call.outputs), inputs=dict(call.inputs))
            for d in self._defects:
                if not d.active or d.item != call.item:
                    continue
                if d.kind == "under_quantity" and new.verb is GoalVerb.MINE:
                    new.outputs = {call.item: call.count - d.reduce_by}
                elif d.kind == "null_station":
                    new.station = None
                elif d.kind == "wrong_tool" and new.verb is GoalVerb.MINE:
                    new.tool = d.downgraded_tool
            steps.append(new)
        for patch in self._patches:
            anchor = next(
                (i for i, s in enumerate(steps) if s.item == patch.anchor_item),
                len(steps),
            )
            steps.insert(anchor, patch.call)
        plan = Plan(self._oracle.name, steps, self._oracle.return_item)
        self._current = plan
        return plan

    # -- planner protocol -------------------------------------------------
    def initial_plan(self, task: TaskSpec, state: WorldState, rng: np.random.Generator) -> Plan:
        self._oracle = oracle_plan(task, self.env, state)
        self._defects = self._roll_defects(self._oracle, rng)
        self._patches = []
        return self._materialize()

    def replan(
        self,
        task: TaskSpec,
        state: WorldState,
        trace: ExecTrace,
        explanation: Explanation | None,
        description: str = "",
    ) -> Plan:
        if explanation is None and trace.failed_step is not None and self._current is not None:
            # feedback-only mode: self-diagnose from the reported failed step
            index = trace.failed_step[0]
            if 1 <= index <= len(self._current.steps):
                explanation = self.env.check_preconditions(state, self._current.step(index))
                if explanation is not None:
                    explanation.step_index = index
        if explanation is not None:
            self._repair(explanation)
        return self._materialize()

    def _repair(self, explanation: Explanation) -> None:
        kind = explanation.kind
        if kind is ExplanationKind.MISSING_TOOL:
            for defect_kind in ("drop_tool", "wrong_tool"):
                for d in self._defects:
                    wanted = d.item if d.kind == "drop_tool" else d.proper_tool
                    if d.active and d.kind == defect_kind and wanted == explanation.required:
                        d.active = False
                        return
        elif kind is ExplanationKind.MISSING_STATION:
            for defect_kind in ("drop_station", "null_station"):
                for d in self._defects:
                    if d.active and d.kind == defect_kind and d.station == explanation.station:
                        d.active = False
                        return
        elif kind is ExplanationKind.INSUFFICIENT_INPUT:
            shortfall = explanation.need - explanation.have
            if shortfall <= 0:
                return
            for d in self._defects:
                if d.active and d.kind == "under_quantity" and d.item == explanation.item:
                    d.active = False
                    break
            item = explanation.item
            anchor = ""
            if self._current is not None and 1 <= explanation.step_index <= len(self._current.steps):
                anchor = self._current.step(explanation.step_index).item
            if item in self.env.mine_rules:
                rule = self.env.mine_rules[item]
                tool = (
                    PICKAXE_FOR_TIER[rule.required_tier]
                    if rule.required_tier > ToolTier.NONE
                    else None
                )
                call = GoalCall(GoalVerb.MINE, {item: shortfall}, tool=tool)
            elif (recipe := self.env.recipes.for_item(item)) is not None:
                batches = recipe.batches_for(shortfall)
                call = GoalCall(
                    GoalVerb.CRAFT,
                    {item: batches * recipe.batch_size},
                    inputs={i: q * batches for i, q in recipe.inputs.items()},
                    station=recipe.station,
                )
            elif item in self.env.mob_by_drop:
                call = GoalCall(GoalVerb.KILL, {item: shortfall})
            else:
                return
            self._patches.append(_Patch(anchor_item=anchor, call=call))
