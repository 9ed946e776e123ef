"""Goal selection: executable frontier, horizon prediction, softmax choice.

The horizon model is a linear softmax classifier over log-spaced step
buckets; its scalar summary is the probability-weighted bucket-midpoint
sum, i.e. the expected number of steps to finish a goal from the current
state.  Candidate goals get probability proportional to exp(-mu), so the
nearest-looking goal is favoured but the choice can stay stochastic.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsl import GoalCall, GoalVerb
from .graph import GoalGraph
from .mapping import trigram_cosine
from .world import Craftworld, WorldState


class EmptyCandidates(Exception):
    pass


class FeatureMismatch(Exception):
    pass


class InsufficientData(Exception):
    def __init__(self, goals: list[str]):
        super().__init__(f"no trajectory records for goals: {', '.join(goals)}")
        self.goals = goals


class MissingModel(Exception):
    pass


def goal_key(call: GoalCall) -> str:
    """Stable identity used for one-hot features and tie-breaking."""
    return f"{call.category().value}:{call.item}"


# ----------------------------------------------------------------------
# frontier

def executable_frontier(
    graph: GoalGraph, state: WorldState, env: Craftworld, completed: set[int]
) -> list[int]:
    """Steps runnable right now: parents done, preconditions pass.

    A satisfied OR group removes all of its members; an unsatisfied one
    contributes every viable member.  An empty result means the plan is
    stuck (or finished) and the caller owes the planner a feedback round.
    """
    effective = set(completed)
    for group in graph.or_groups:
        if group & completed:
            effective |= group
    frontier: list[int] = []
    for node in graph.nodes:
        if node in effective:
            continue
        if not set(graph.parents[node]) <= effective:
            continue
        if env.check_preconditions(state, graph.plan.step(node)) is not None:
            continue
        frontier.append(node)
    return frontier


# ----------------------------------------------------------------------
# features

@dataclass
class FeatureSpec:
    items: list[str]
    biomes: list[str]
    goals: list[str]
    inventory_clip: int = 64
    distance_cap: float = 1_000_000.0

    @property
    def dim(self) -> int:
        # inventory + biome one-hot + scaled distance + goal one-hot + bias
        return len(self.items) + len(self.biomes) + 1 + len(self.goals) + 1

    def to_json(self) -> dict:
        return {
            "items": self.items,
            "biomes": self.biomes,
            "goals": self.goals,
            "inventory_clip": self.inventory_clip,
            "distance_cap": self.distance_cap,
        }

    @classmethod
    def from_json(cls, data: dict) -> "FeatureSpec":
        return cls(
            list(data["items"]),
            list(data["biomes"]),
            list(data["goals"]),
            int(data.get("inventory_clip", 64)),
            float(data.get("distance_cap", 1_000_000.0)),
        )


def encode_features(
    spec: FeatureSpec, inventory: dict[str, int], biome: str, distance: float, goal: str
) -> np.ndarray:
    if biome not in spec.biomes:
        raise FeatureMismatch(f"biome {biome!r} not in feature spec")
    if goal not in spec.goals:
        raise FeatureMismatch(f"goal {goal!r} not in feature spec")
    x = np.zeros(spec.dim)
    offset = 0
    for i, item in enumerate(spec.items):
        x[offset + i] = min(inventory.get(item, 0), spec.inventory_clip) / spec.inventory_clip
    offset += len(spec.items)
    x[offset + spec.biomes.index(biome)] = 1.0
    offset += len(spec.biomes)
    x[offset] = math.log1p(min(distance, spec.distance_cap)) / math.log1p(spec.distance_cap)
    offset += 1
    x[offset + spec.goals.index(goal)] = 1.0
    x[-1] = 1.0
    return x


def state_features(
    spec: FeatureSpec, state: WorldState, env: Craftworld, call: GoalCall
) -> np.ndarray:
    return encode_features(
        spec, state.inventory, state.biome, env.goal_distance(state, call), goal_key(call)
    )


# ----------------------------------------------------------------------
# horizon model

def default_bucket_edges(n_buckets: int = 12, low: float = 1.0, high: float = 12000.0) -> list[float]:
    return list(np.geomspace(low, high, n_buckets + 1))


@dataclass
class HorizonModel:
    feature_spec: FeatureSpec
    bucket_edges: list[float]
    weights: np.ndarray  # feature_dim x buckets
    training_meta: dict = field(default_factory=dict)

    @property
    def midpoints(self) -> np.ndarray:
        edges = np.asarray(self.bucket_edges)
        return (edges[:-1] + edges[1:]) / 2.0

    @classmethod
    def untrained(cls, spec: FeatureSpec, n_buckets: int = 12) -> "HorizonModel":
        edges = default_bucket_edges(n_buckets)
        return cls(spec, edges, np.zeros((spec.dim, n_buckets)))

    def bucket_of(self, horizon: float) -> int:
        edges = self.bucket_edges
        for b in range(len(edges) - 1):
            if horizon < edges[b + 1]:
                return b
        return len(edges) - 2

    def bucket_probs(self, x: np.ndarray) -> np.ndarray:
        logits = x @ self.weights
        logits = logits - logits.max()
        p = np.exp(logits)
        return p / p.sum()

    def predict(self, x: np.ndarray) -> float:
        if x.shape[0] != self.feature_spec.dim:
            raise FeatureMismatch(
                f"feature length {x.shape[0]} != spec dim {self.feature_spec.dim}"
            )
        return float(self.bucket_probs(x) @ self.midpoints)

    def predict_goal(self, state: WorldState, env: Craftworld, call: GoalCall) -> float:
        return self.predict(state_features(self.feature_spec, state, env, call))

    def save(self, path: str | Path) -> None:
        data = {
            "feature_spec": self.feature_spec.to_json(),
            "bucket_edges": list(self.bucket_edges),
            "weights": self.weights.tolist(),
            "training_meta": self.training_meta,
        }
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "HorizonModel":
        data = json.loads(Path(path).read_text())
        return cls(
            FeatureSpec.from_json(data["feature_spec"]),
            [float(e) for e in data["bucket_edges"]],
            np.asarray(data["weights"], dtype=float),
            data.get("training_meta", {}),
        )


# ----------------------------------------------------------------------
# goal distribution (softmax over -mu)

@dataclass
class GoalDistribution:
    candidates: list[str]
    probs: list[float]
    mu_values: list[float]


def distribution_from_mu(candidates: list[str], mu_values: list[float]) -> GoalDistribution:
    if not candidates:
        raise EmptyCandidates("no candidate goals")
    z = -np.asarray(mu_values, dtype=float)
    z = z - z.max()  # shift-invariant, numerically safe
    p = np.exp(z)
    p = p / p.sum()
    return GoalDistribution(list(candidates), [float(v) for v in p], list(mu_values))


def goal_distribution(
    model: HorizonModel,
    state: WorldState,
    env: Craftworld,
    candidates: list[tuple[str, GoalCall]],
) -> GoalDistribution:
    if not candidates:
        raise EmptyCandidates("no candidate goals")
    mu_values = [model.predict_goal(state, env, call) for _, call in candidates]
    return distribution_from_mu([cid for cid, _ in candidates], mu_values)


def select(dist: GoalDistribution, rng: np.random.Generator, mode: str = "sample") -> str:
    if not dist.candidates:
        raise EmptyCandidates("no candidate goals")
    if mode == "argmax":
        best_mu = min(dist.mu_values)
        tied = [c for c, m in zip(dist.candidates, dist.mu_values) if m == best_mu]
        return sorted(tied)[0]
    index = int(rng.choice(len(dist.candidates), p=np.asarray(dist.probs)))
    return dist.candidates[index]


# ----------------------------------------------------------------------
# training

@dataclass
class TrajectoryRecord:
    episode: str
    t: int
    biome: str
    inventory: dict[str, int]
    goal: str
    distance: float
    horizon: int

    def to_json(self) -> dict:
        return {
            "episode": self.episode,
            "t": self.t,
            "biome": self.biome,
            "inventory": self.inventory,
            "goal": self.goal,
            "distance": self.distance,
            "horizon": self.horizon,
        }

    @classmethod
    def from_json(cls, data: dict) -> "TrajectoryRecord":
        return cls(
            str(data["episode"]),
            int(data["t"]),
            str(data["biome"]),
            {k: int(v) for k, v in data["inventory"].items()},
            str(data["goal"]),
            float(data["distance"]),
            int(data["horizon"]),
        )


@dataclass
class TrainConfig:
    epochs: int = 80
    learning_rate: float = 2.0
    batch_size: int = 256
    seed: int = 0
    n_buckets: int = 12


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy_and_grad(
    weights: np.ndarray, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over a batch and its analytic weight gradient."""
    probs = _softmax_rows(x @ weights)
    n = x.shape[0]
    loss = float(-np.log(probs[np.arange(n), y] + 1e-12).mean())
    grad_logits = probs
    grad_logits[np.arange(n), y] -= 1.0
    grad = x.T @ grad_logits / n
    return loss, grad


def build_feature_spec(records: list[TrajectoryRecord], inventory_clip: int = 64) -> FeatureSpec:
    items = sorted({item for r in records for item in r.inventory})
    biomes = sorted({r.biome for r in records})
    goals = sorted({r.goal for r in records})
    return FeatureSpec(items, biomes, goals, inventory_clip)


def train_horizon(
    records: list[TrajectoryRecord],
    config: TrainConfig | None = None,
    required_goals: list[str] | None = None,
    feature_spec: FeatureSpec | None = None,
) -> HorizonModel:
    """Mini-batch gradient descent on bucketed cross-entropy.

    Raises :class:`InsufficientData` when there is nothing to train on;
    required goals without records are listed in ``training_meta`` and
    training proceeds for the covered ones.
    """
    config = config or TrainConfig()
    covered = {r.goal for r in records}
    uncovered = sorted(set(required_goals or []) - covered)
    if not records:
        raise InsufficientData(uncovered or sorted(set(required_goals or [])))

    spec = feature_spec or build_feature_spec(records)
    model = HorizonModel.untrained(spec, config.n_buckets)
    x = np.stack(
        [encode_features(spec, r.inventory, r.biome, r.distance, r.goal) for r in records]
    )
    y = np.asarray([model.bucket_of(r.horizon) for r in records])

    rng = np.random.default_rng(config.seed)
    weights = model.weights
    initial_loss, _ = cross_entropy_and_grad(weights, x, y)
    losses = [initial_loss]
    n = x.shape[0]
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = perm[start : start + config.batch_size]
            _, grad = cross_entropy_and_grad(weights, x[batch], y[batch])
            weights -= config.learning_rate * grad
        epoch_loss, _ = cross_entropy_and_grad(weights, x, y)
        losses.append(epoch_loss)

    model.weights = weights
    model.training_meta = {
        "epochs": config.epochs,
        "learning_rate": config.learning_rate,
        "batch_size": config.batch_size,
        "seed": config.seed,
        "records": n,
        "initial_loss": initial_loss,
        "final_loss": losses[-1],
        "loss_curve": losses,
        "uncovered_goals": uncovered,
    }
    return model


def spearman(a: np.ndarray, b: np.ndarray) -> float:
    """Rank correlation with average ranks for ties."""

    def ranks(v: np.ndarray) -> np.ndarray:
        order = np.argsort(v, kind="stable")
        r = np.empty(len(v), dtype=float)
        r[order] = np.arange(len(v), dtype=float)
        # average ties
        sorted_v = v[order]
        i = 0
        while i < len(v):
            j = i
            while j + 1 < len(v) and sorted_v[j + 1] == sorted_v[i]:
                j += 1
            if j > i:
                r[order[i : j + 1]] = (i + j) / 2.0
            i = j + 1
        return r

    ra, rb = ranks(np.asarray(a, dtype=float)), ranks(np.asarray(b, dtype=float))
    ra -= ra.mean()
    rb -= rb.mean()
    denom = math.sqrt(float((ra * ra).sum()) * float((rb * rb).sum()))
    return float((ra * rb).sum() / denom) if denom else 0.0


# ----------------------------------------------------------------------
# selector policies

class HorizonSelector:
    """Softmax over predicted horizons; 'argmax' mode for deterministic runs."""

    name = "hps"

    def __init__(self, model: HorizonModel, mode: str = "sample"):
        self.model = model
        self.mode = mode

    def choose(
        self,
        frontier: list[int],
        graph: GoalGraph,
        state: WorldState,
        env: Craftworld,
        rng: np.random.Generator,
    ) -> int:
        candidates = [(f"step{n:03d}", graph.plan.step(n)) for n in frontier]
        dist = goal_distribution(self.model, state, env, candidates)
        chosen = select(dist, rng, self.mode)
        return frontier[[c for c, _ in candidates].index(chosen)]


class FixedSelector:
    """Lowest plan index first: follow the plan as written."""

    name = "fixed"

    def choose(self, frontier, graph, state, env, rng) -> int:
        return min(frontier)


class RandomSelector:
    name = "random"

    def choose(self, frontier, graph, state, env, rng) -> int:
        return frontier[int(rng.integers(len(frontier)))]


class SimilaritySelector:
    """Trigram cosine between goal phrasing and a textual state summary."""

    name = "similarity"

    def choose(self, frontier, graph, state, env, rng) -> int:
        from .dsl import describe_call

        items = state.inventory_in_order()
        listed = ", ".join(f"{c} {i}" for i, c in items) if items else "nothing"
        summary = f"I locate in {state.biome} biome. My inventory now has {listed}."
        scored = []
        for node in frontier:
            call = graph.plan.step(node)
            scored.append((trigram_cosine(describe_call(call), summary), -node))
        best = max(range(len(frontier)), key=lambda i: scored[i])
        return frontier[best]


def make_selector(kind: str, model: HorizonModel | None = None, mode: str = "sample"):
    if kind == "hps":
        if model is None:
            raise MissingModel("horizon selector requires a trained model checkpoint")
        return HorizonSelector(model, mode)
    if kind == "fixed":
        return FixedSelector()
    if kind == "random":
        return RandomSelector()
    if kind == "similarity":
        return SimilaritySelector()
    raise ValueError(f"unknown selector kind {kind!r}")
