"""Dependency structure of a plan: precedence edges, AND/OR groups.

A precedence edge runs from the latest producers of an item to the step
that consumes it (as input, tool or station).  Steps sharing the same
parent set form an order-free AND group.  OR groups come from task
configuration: steps whose outputs are alternative sources for the same
abstract item are interchangeable.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .dsl import GoalCall, GoalVerb, Plan
from .world import Craftworld, UnknownItem


class CyclicPlan(Exception):
    pass


@dataclass
class GoalGraph:
    plan: Plan
    parents: dict[int, frozenset[int]]
    and_groups: list[frozenset[int]]
    or_groups: list[frozenset[int]]
    or_alias: dict[int, str] = field(default_factory=dict)  # node -> abstract item

    @property
    def nodes(self) -> list[int]:
        return list(range(1, len(self.plan.steps) + 1))

    def groups(self) -> list[frozenset[int]]:
        """AND and OR groups together; they partition the node set."""
        return self.and_groups + self.or_groups

    def or_group_of(self, node: int) -> frozenset[int] | None:
        for group in self.or_groups:
            if node in group:
                return group
        return None


def _requirements(call: GoalCall, env: Craftworld) -> dict[str, int]:
    """Items this step needs beforehand: inputs, tool, station."""
    needs: dict[str, int] = {}
    if call.category() in (GoalVerb.CRAFT, GoalVerb.SMELT):
        recipe = env.recipes.for_item(call.item)
        if recipe is not None:
            batches = recipe.batches_for(call.count)
            for item, qty in recipe.inputs.items():
                needs[item] = needs.get(item, 0) + qty * batches
            if recipe.station:
                needs[recipe.station] = max(needs.get(recipe.station, 0), 1)
        if call.station:
            needs[call.station] = max(needs.get(call.station, 0), 1)
    elif call.category() is GoalVerb.MINE:
        from .world import PICKAXE_FOR_TIER, TIER_OF_PICKAXE

        rule = env.mine_rules.get(call.item)
        required = rule.required_tier if rule is not None else 0
        named_tier = TIER_OF_PICKAXE.get(call.tool or "")
        if named_tier is not None and named_tier >= required:
            needs[call.tool] = 1
        elif required > 0:
            needs[PICKAXE_FOR_TIER[required]] = 1
        if call.tool and named_tier is None:
            needs[call.tool] = max(needs.get(call.tool, 0), 1)
    return needs


def _known_item(item: str, env: Craftworld, alternatives: dict[str, list[str]]) -> bool:
    if env.recipes.for_item(item) is not None or item in env.mine_rules:
        return True
    if item in env.mob_by_drop or item in alternatives:
        return True
    return any(item in sources for sources in alternatives.values())


def build_goal_graph(
    plan: Plan,
    env: Craftworld,
    alternatives: dict[str, list[str]] | None = None,
) -> GoalGraph:
    """Compute precedence parents and AND/OR groups for a plan.

    Raises :class:`UnknownItem` for items absent from the databases and
    :class:`CyclicPlan` if the edge set is somehow cyclic.
    """
    alternatives = alternatives or {}
    steps = plan.steps
    for call in steps:
        for item in list(call.outputs) + list(call.inputs):
            if not _known_item(item, env, alternatives):
                raise UnknownItem(item)

    # latest-producers-first accumulation per requirement
    parents: dict[int, set[int]] = {i: set() for i in range(1, len(steps) + 1)}
    for j, call in enumerate(steps, 1):
        for item, need in _requirements(call, env).items():
            remaining = need
            for i in range(j - 1, 0, -1):
                produced = steps[i - 1].outputs.get(item, 0)
                if produced > 0:
                    parents[j].add(i)
                    remaining -= produced
                    if remaining <= 0:
                        break
            # any shortfall is assumed to come from the starting inventory;
            # the runtime precondition check owns that complaint

    _assert_acyclic(parents)

    # OR groups: steps producing alternative sources of one abstract item
    or_groups: list[frozenset[int]] = []
    or_alias: dict[int, str] = {}
    grouped: set[int] = set()
    for abstract, sources in alternatives.items():
        members = frozenset(
            i for i, call in enumerate(steps, 1) if call.item in sources
        )
        if len(members) > 1:
            or_groups.append(members)
            for node in members:
                or_alias[node] = abstract
            grouped |= members

    by_parents: dict[frozenset[int], list[int]] = {}
    for node in range(1, len(steps) + 1):
        if node in grouped:
            continue
        by_parents.setdefault(frozenset(parents[node]), []).append(node)
    and_groups = [frozenset(nodes) for nodes in by_parents.values()]

    return GoalGraph(
        plan=plan,
        parents={n: frozenset(p) for n, p in parents.items()},
        and_groups=and_groups,
        or_groups=or_groups,
        or_alias=or_alias,
    )


def _assert_acyclic(parents: dict[int, set[int]]) -> None:
    # edges always point from earlier to later steps, so this is defensive
    seen: set[int] = set()
    in_progress: set[int] = set()

    def visit(node: int) -> None:
        if node in seen:
            return
        if node in in_progress:
            raise CyclicPlan(f"cycle through step {node}")
        in_progress.add(node)
        for parent in parents[node]:
            visit(parent)
        in_progress.discard(node)
        seen.add(node)

    for node in parents:
        visit(node)
