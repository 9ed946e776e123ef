"""Symbolic crafting world: recipes, tool gates, stochastic goal execution.

The world replaces a learned low-level controller with per-skill success
statistics: each unit of work is one skill attempt that succeeds with the
skill's probability and costs a uniform draw from a quarter of its step
budget up to the full budget (the full budget on failure).  Mining and
killing pay a travel cost of ``ceil(distance / speed)`` first.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from importlib import resources
from pathlib import Path

import numpy as np

from .dsl import GoalCall, GoalVerb, Plan
from .explain import Explanation, ExplanationKind


class ToolTier(IntEnum):
    NONE = 0
    WOODEN = 1
    STONE = 2
    IRON = 3


PICKAXE_FOR_TIER = {
    ToolTier.WOODEN: "wooden_pickaxe",
    ToolTier.STONE: "stone_pickaxe",
    ToolTier.IRON: "iron_pickaxe",
}
TIER_OF_PICKAXE = {v: k for k, v in PICKAXE_FOR_TIER.items()}

#: Distance used for resources the current biome does not host; finite so
#: horizon features stay numeric.
INFINITE_DISTANCE = 1_000_000.0


class UnknownItem(Exception):
    pass


class InvalidConfig(Exception):
    pass


@dataclass(frozen=True)
class Recipe:
    id: str
    outputs: dict[str, int]
    inputs: dict[str, int]
    station: str | None
    kind: str  # "craft" | "smelt"

    @property
    def item(self) -> str:
        return next(iter(self.outputs))

    @property
    def batch_size(self) -> int:
        return self.outputs[self.item]

    def batches_for(self, count: int) -> int:
        return max(1, math.ceil(count / self.batch_size))


class RecipeDb:
    """Recipes keyed by output item."""

    def __init__(self, recipes: list[Recipe]):
        self.by_item: dict[str, Recipe] = {}
        for recipe in recipes:
            self.by_item[recipe.item] = recipe

    def for_item(self, item: str) -> Recipe | None:
        return self.by_item.get(item)

    def require(self, item: str) -> Recipe:
        recipe = self.by_item.get(item)
        if recipe is None:
            raise UnknownItem(item)
        return recipe

    @classmethod
    def from_json(cls, records: list[dict]) -> "RecipeDb":
        return cls(
            [
                Recipe(
                    r["id"],
                    dict(r["outputs"]),
                    dict(r["inputs"]),
                    r.get("station"),
                    r.get("kind", "craft"),
                )
                for r in records
            ]
        )


@dataclass(frozen=True)
class MineRule:
    item: str
    required_tier: ToolTier
    host_biomes: frozenset[str]
    distance_range: tuple[float, float]


@dataclass(frozen=True)
class MobRule:
    mob: str
    drop: str
    host_biomes: frozenset[str]
    distance_range: tuple[float, float]


@dataclass(frozen=True)
class SkillProfile:
    id: str
    description: str
    verb: str
    target_item: str | None
    tool: str | None
    success_prob: float
    max_steps: int
    units: int = 1


class SkillCatalog:
    def __init__(self, skills: list[SkillProfile]):
        self.skills = skills
        self._by_item: dict[tuple[str, str], list[SkillProfile]] = {}
        self._family: dict[str, SkillProfile] = {}
        for s in skills:
            if s.target_item:
                self._by_item.setdefault((s.verb, s.target_item), []).append(s)
            else:
                key = s.verb if s.verb != "craft" else ("craft" if s.tool is None else "craft_station")
                self._family[key] = s

    @classmethod
    def from_json(cls, records: list[dict]) -> "SkillCatalog":
        return cls(
            [
                SkillProfile(
                    r["id"],
                    r["description"],
                    r["verb"],
                    r.get("target_item"),
                    r.get("tool"),
                    float(r["success_prob"]),
                    int(r["max_steps"]),
                    int(r.get("units", 1)),
                )
                for r in records
            ]
        )

    def lookup(self, goal: GoalCall, effective_tier: ToolTier) -> SkillProfile | None:
        """Single-unit skill for a goal; craft/smelt fall back to families.

        When several rows exist for one item (e.g. different pickaxes),
        pick the highest-tier row not above the agent's effective tier.
        """
        category = goal.category()
        if category in (GoalVerb.MINE, GoalVerb.KILL):
            verb = category.value
            rows = [s for s in self._by_item.get((verb, goal.item), []) if s.units == 1]
            if not rows:
                return None
            best, best_tier = None, -1
            for row in rows:
                tier = TIER_OF_PICKAXE.get(row.tool or "", ToolTier.NONE)
                if tier <= effective_tier and tier > best_tier:
                    best, best_tier = row, tier
            return best or min(rows, key=lambda s: TIER_OF_PICKAXE.get(s.tool or "", ToolTier.NONE))
        if category is GoalVerb.SMELT:
            return self._family.get("smelt")
        if category is GoalVerb.EQUIP:
            return self._family.get("equip")
        if goal.station:
            return self._family.get("craft_station")
        return self._family.get("craft")


@dataclass
class WorldConfig:
    biomes: list[str]
    mine_rules: list[MineRule]
    mob_rules: list[MobRule]
    speed: float = 4.0
    mob_despawn_prob: float = 1e-3
    infinite_distance: float = INFINITE_DISTANCE

    def __post_init__(self):
        if not self.biomes:
            raise InvalidConfig("config must list at least one biome")
        for rule in self.mine_rules:
            lo, hi = rule.distance_range
            if lo < 0 or lo > hi:
                raise InvalidConfig(f"bad distance range for {rule.item}: [{lo}, {hi}]")

    @classmethod
    def from_json(cls, data: dict) -> "WorldConfig":
        # rule lists may be inlined or name a sibling JSON file
        mine_records = data.get("mine_rules", [])
        if isinstance(mine_records, str):
            mine_records = _load_json(mine_records)
        mob_records = data.get("mob_rules", [])
        if isinstance(mob_records, str):
            mob_records = _load_json(mob_records)
        mine = [
            MineRule(
                r["item"],
                ToolTier[r.get("required_tier", "none").upper()],
                frozenset(r["host_biomes"]),
                (float(r["distance_range"][0]), float(r["distance_range"][1])),
            )
            for r in mine_records
        ]
        mobs = [
            MobRule(
                r["mob"],
                r["drop"],
                frozenset(r["host_biomes"]),
                (float(r["distance_range"][0]), float(r["distance_range"][1])),
            )
            for r in mob_records
        ]
        return cls(
            biomes=list(data["biomes"]),
            mine_rules=mine,
            mob_rules=mobs,
            speed=float(data.get("speed", 4.0)),
            mob_despawn_prob=float(data.get("mob_despawn_prob", 1e-3)),
            infinite_distance=float(data.get("infinite_distance", INFINITE_DISTANCE)),
        )


@dataclass
class TaskSpec:
    id: str
    target: dict[str, int]
    max_episode_steps: int
    meta_group: str
    prompt: str = ""
    alternatives: dict[str, list[str]] = field(default_factory=dict)

    @classmethod
    def from_json(cls, r: dict) -> "TaskSpec":
        return cls(
            r["id"],
            dict(r["target"]),
            int(r["max_episode_steps"]),
            r.get("meta_group", "MT1"),
            r.get("prompt", f"How to obtain {r['id']}"),
            {k: list(v) for k, v in r.get("alternatives", {}).items()},
        )


@dataclass
class MobState:
    distance: float
    alive: bool = True


@dataclass
class ExecOutcome:
    success: bool
    steps_used: int
    failure: Explanation | None = None
    items_delta: dict[str, int] = field(default_factory=dict)
    budget_exhausted: bool = False


@dataclass
class WorldState:
    biome: str
    inventory: dict[str, int]
    node_distances: dict[str, float]
    mobs: dict[str, MobState]
    rng: np.random.Generator
    equipped: str | None = None
    steps_elapsed: int = 0
    acquisition_order: list[str] = field(default_factory=list)
    high_water: dict[str, int] = field(default_factory=dict)

    def count(self, item: str) -> int:
        return self.inventory.get(item, 0)

    def gain(self, item: str, n: int) -> None:
        if n <= 0:
            return
        if self.count(item) == 0 and item not in self.acquisition_order:
            self.acquisition_order.append(item)
        self.inventory[item] = self.count(item) + n
        if self.inventory[item] > self.high_water.get(item, 0):
            self.high_water[item] = self.inventory[item]

    def spend(self, item: str, n: int) -> None:
        have = self.count(item)
        if n > have:
            raise ValueError(f"cannot spend {n} {item}, have {have}")
        self.inventory[item] = have - n

    def effective_tier(self) -> ToolTier:
        tier = ToolTier.NONE
        for pickaxe, t in TIER_OF_PICKAXE.items():
            if self.count(pickaxe) > 0 and t > tier:
                tier = t
        return tier

    def inventory_in_order(self) -> list[tuple[str, int]]:
        """(item, count) pairs in acquisition order, zero counts omitted."""
        listed = [(i, self.inventory[i]) for i in self.acquisition_order if self.count(i) > 0]
        extra = [
            (i, c)
            for i, c in self.inventory.items()
            if c > 0 and i not in self.acquisition_order
        ]
        return listed + extra


class Craftworld:
    """Immutable environment bundle: config + recipes + skills.

    A :class:`WorldState` belongs to one episode; the environment object
    is shared freely across episodes.
    """

    def __init__(self, config: WorldConfig, recipes: RecipeDb, skills: SkillCatalog):
        self.config = config
        self.recipes = recipes
        self.skills = skills
        self.mine_rules = {r.item: r for r in config.mine_rules}
        self.mob_by_drop = {r.drop: r for r in config.mob_rules}

    # ------------------------------------------------------------------
    def reset(self, seed: int, biome: str | None = None) -> WorldState:
        rng = np.random.default_rng(seed)
        if biome is None:
            biome = self.config.biomes[int(rng.integers(len(self.config.biomes)))]
        elif biome not in self.config.biomes:
            raise InvalidConfig(f"biome {biome!r} not in config")
        distances: dict[str, float] = {}
        for rule in self.config.mine_rules:
            if biome in rule.host_biomes:
                lo, hi = rule.distance_range
                distances[rule.item] = float(rng.uniform(lo, hi))
            else:
                distances[rule.item] = self.config.infinite_distance
        mobs: dict[str, MobState] = {}
        for rule in self.config.mob_rules:
            if biome in rule.host_biomes:
                lo, hi = rule.distance_range
                mobs[rule.mob] = MobState(float(rng.uniform(lo, hi)), alive=True)
        return WorldState(
            biome=biome, inventory={}, node_distances=distances, mobs=mobs, rng=rng
        )

    # ------------------------------------------------------------------
    def goal_distance(self, state: WorldState, goal: GoalCall) -> float:
        """Current travel distance to the goal's resource; 0 for crafts."""
        category = goal.category()
        if category is GoalVerb.MINE:
            return state.node_distances.get(goal.item, self.config.infinite_distance)
        if category is GoalVerb.KILL:
            rule = self.mob_by_drop.get(goal.item)
            if rule is None:
                return self.config.infinite_distance
            mob = state.mobs.get(rule.mob)
            if mob is None or not mob.alive:
                return self.config.infinite_distance
            return mob.distance
        return 0.0

    def check_preconditions(self, state: WorldState, goal: GoalCall) -> Explanation | None:
        """First failing condition, in fixed order.

        1. station possession, 2. tool tier, 3. input quantities,
        4. feasibility (resource reachable; the call names the recipe's
        station; matched skill can succeed at all).
        """
        category = goal.category()
        if category in (GoalVerb.CRAFT, GoalVerb.SMELT):
            recipe = self.recipes.for_item(goal.item)
            if recipe is None:
                return Explanation(
                    ExplanationKind.INFEASIBLE_GOAL,
                    reason=f"there is no recipe for {goal.item}",
                )
            # 1. station possession (recipe's station, plus any the call names)
            for station in (recipe.station, goal.station):
                if station and state.count(station) == 0:
                    return Explanation(ExplanationKind.MISSING_STATION, station=station)
            # 3. input quantities at recipe ratios
            batches = recipe.batches_for(goal.count)
            for item, qty in recipe.inputs.items():
                need = qty * batches
                have = state.count(item)
                if have < need:
                    return Explanation(
                        ExplanationKind.INSUFFICIENT_INPUT, item=item, need=need, have=have
                    )
            # 4. the call must actually use the required station
            if recipe.station and goal.station != recipe.station:
                return Explanation(
                    ExplanationKind.MISSING_STATION, station=recipe.station
                )
            return None

        if category is GoalVerb.MINE:
            rule = self.mine_rules.get(goal.item)
            if rule is None:
                return Explanation(
                    ExplanationKind.INFEASIBLE_GOAL,
                    reason=f"{goal.item} cannot be mined",
                )
            # 2. tool tier sufficiency
            if state.effective_tier() < rule.required_tier:
                return Explanation(
                    ExplanationKind.MISSING_TOOL,
                    verb="mine",
                    item=goal.item,
                    required=PICKAXE_FOR_TIER[rule.required_tier],
                )
            # 4. feasibility in this biome
            distance = state.node_distances.get(goal.item, self.config.infinite_distance)
            if distance >= self.config.infinite_distance:
                return Explanation(
                    ExplanationKind.INFEASIBLE_GOAL,
                    reason=f"{goal.item} is not available in {state.biome} biome",
                )
            skill = self.skills.lookup(goal, state.effective_tier())
            if skill is None or skill.success_prob <= 0.0:
                return Explanation(
                    ExplanationKind.INFEASIBLE_GOAL,
                    reason=f"mine {goal.item} cannot succeed with the current tool",
                )
            return None

        if category is GoalVerb.KILL:
            rule = self.mob_by_drop.get(goal.item)
            if rule is None:
                return Explanation(
                    ExplanationKind.INFEASIBLE_GOAL,
                    reason=f"no creature drops {goal.item}",
                )
            mob = state.mobs.get(rule.mob)
            if mob is None or not mob.alive:
                return Explanation(
                    ExplanationKind.INFEASIBLE_GOAL,
                    reason=f"there is no {rule.mob} nearby",
                )
            return None

        # equip: must hold the item
        if state.count(goal.item) == 0:
            return Explanation(
                ExplanationKind.INSUFFICIENT_INPUT, item=goal.item, need=1, have=0
            )
        return None

    # ------------------------------------------------------------------
    def _charge(self, state: WorldState, cost: int, budget: int) -> tuple[int, bool]:
        """Add ``cost`` steps, clamped at the episode budget.

        Returns (steps actually charged, hit_budget).
        """
        room = budget - state.steps_elapsed
        charged = min(cost, room)
        state.steps_elapsed += charged
        return charged, charged < cost

    def _roll_despawns(self, state: WorldState, steps: int) -> None:
        if steps <= 0:
            return
        p_gone = 1.0 - (1.0 - self.config.mob_despawn_prob) ** steps
        for mob in state.mobs.values():
            if mob.alive and state.rng.random() < p_gone:
                mob.alive = False

    def execute_goal(self, state: WorldState, goal: GoalCall, budget: int) -> ExecOutcome:
        """Attempt a goal; mutates ``state`` and accounts every step.

        Callers should have checked preconditions; executing a failing goal
        anyway returns its explanation at minimal step cost.  Multi-unit
        goals run one skill attempt per unit (per batch for crafts); the
        first failed unit fails the goal, keeping earlier units' yields.
        """
        failure = self.check_preconditions(state, goal)
        steps_used = 0
        delta: dict[str, int] = {}
        if failure is not None:
            charged, _ = self._charge(state, 1, budget)
            self._roll_despawns(state, charged)
            return ExecOutcome(False, charged, failure=failure)

        category = goal.category()
        skill = self.skills.lookup(goal, state.effective_tier())
        if skill is None:
            charged, _ = self._charge(state, 1, budget)
            return ExecOutcome(
                False,
                charged,
                failure=Explanation(
                    ExplanationKind.UNKNOWN_GOAL, reason=f"no skill for {goal.item}"
                ),
            )

        def apply(item: str, n: int) -> None:
            state.gain(item, n)
            delta[item] = delta.get(item, 0) + n

        # travel first for gather goals
        if category in (GoalVerb.MINE, GoalVerb.KILL):
            distance = self.goal_distance(state, goal)
            travel = math.ceil(distance / self.config.speed)
            charged, clipped = self._charge(state, travel, budget)
            steps_used += charged
            if clipped:
                self._roll_despawns(state, steps_used)
                return ExecOutcome(False, steps_used, items_delta=delta, budget_exhausted=True)

        if category in (GoalVerb.CRAFT, GoalVerb.SMELT):
            recipe = self.recipes.require(goal.item)
            units = recipe.batches_for(goal.count)
        else:
            units = goal.count

        low = math.ceil(0.25 * skill.max_steps)
        for _ in range(units):
            success = state.rng.random() < skill.success_prob
            cost = int(state.rng.integers(low, skill.max_steps + 1)) if success else skill.max_steps
            charged, clipped = self._charge(state, cost, budget)
            steps_used += charged
            if clipped:
                self._roll_despawns(state, steps_used)
                return ExecOutcome(False, steps_used, items_delta=delta, budget_exhausted=True)
            if not success:
                self._roll_despawns(state, steps_used)
                return ExecOutcome(False, steps_used, items_delta=delta)
            if category is GoalVerb.MINE:
                apply(goal.item, 1)
                rule = self.mine_rules[goal.item]
                lo, hi = rule.distance_range
                state.node_distances[goal.item] = float(state.rng.uniform(lo, hi))
            elif category is GoalVerb.KILL:
                apply(goal.item, 1)
                rule = self.mob_by_drop[goal.item]
                lo, hi = rule.distance_range
                state.mobs[rule.mob].distance = float(state.rng.uniform(lo, hi))
            elif category is GoalVerb.EQUIP:
                state.equipped = goal.item
            else:
                for item, qty in recipe.inputs.items():
                    state.spend(item, qty)
                    delta[item] = delta.get(item, 0) - qty
                for item, qty in recipe.outputs.items():
                    apply(item, qty)
        self._roll_despawns(state, steps_used)
        return ExecOutcome(True, steps_used, items_delta=delta)


def task_done(state: WorldState, task: TaskSpec) -> bool:
    """Obtained-ever semantics: consuming the target later cannot undo it.

    Alias targets (e.g. any listed wood) count the summed high-water marks
    of their alternative sources.
    """
    for item, need in task.target.items():
        sources = task.alternatives.get(item, [item])
        got = sum(state.high_water.get(s, 0) for s in sources)
        if got < need:
            return False
    return True


def symbolic_execute(env: Craftworld, state_template: WorldState, plan: Plan) -> Explanation | None:
    """Walk a plan with deterministic successes; first failure or None.

    Uses a scratch copy of the inventory so neither the state nor its RNG
    stream is touched.
    """
    scratch = WorldState(
        biome=state_template.biome,
        inventory=dict(state_template.inventory),
        node_distances=dict(state_template.node_distances),
        mobs={m: MobState(s.distance, s.alive) for m, s in state_template.mobs.items()},
        rng=np.random.default_rng(0),
        high_water=dict(state_template.high_water),
        acquisition_order=list(state_template.acquisition_order),
    )
    for index, goal in enumerate(plan.steps, 1):
        failure = env.check_preconditions(scratch, goal)
        if failure is not None:
            failure.step_index = index
            return failure
        category = goal.category()
        if category in (GoalVerb.CRAFT, GoalVerb.SMELT):
            recipe = env.recipes.require(goal.item)
            for _ in range(recipe.batches_for(goal.count)):
                for item, qty in recipe.inputs.items():
                    scratch.spend(item, qty)
                for item, qty in recipe.outputs.items():
                    scratch.gain(item, qty)
        elif category is not GoalVerb.EQUIP:
            scratch.gain(goal.item, goal.count)
    return None


# ----------------------------------------------------------------------
# data loading

def _load_json(name_or_path: str | Path) -> object:
    path = Path(name_or_path)
    if path.exists():
        return json.loads(path.read_text())
    ref = resources.files("craftbench.data").joinpath(str(name_or_path))
    return json.loads(ref.read_text())


def load_world_config(source: str | Path = "world.json") -> WorldConfig:
    return WorldConfig.from_json(_load_json(source))


def load_recipes(source: str | Path = "recipes.json") -> RecipeDb:
    return RecipeDb.from_json(_load_json(source))


def load_skills(source: str | Path = "skills.json") -> SkillCatalog:
    return SkillCatalog.from_json(_load_json(source))


def load_tasks(source: str | Path = "tasks.json") -> list[TaskSpec]:
    return [TaskSpec.from_json(r) for r in _load_json(source)]


def default_env() -> Craftworld:
    return Craftworld(load_world_config(), load_recipes(), load_skills())


def ablation_env() -> Craftworld:
    return Craftworld(
        load_world_config("ablation_world.json"),
        load_recipes(),
        load_skills("ablation_skills.json"),
    )
