"""Interactive feedback planning on a symbolic crafting world."""

__version__ = "0.1.0"

from .agent import EpisodeResult, LoopMode, run_episode
from .dsl import GoalCall, GoalVerb, Plan, PlanParseError, parse_plan, render_plan
from .planner import FaultConfig, FaultyPlanner, OraclePlanner, oracle_plan
from .world import Craftworld, TaskSpec, WorldState, default_env, task_done

__all__ = [
    "Craftworld",
    "EpisodeResult",
    "FaultConfig",
    "FaultyPlanner",
    "GoalCall",
    "GoalVerb",
    "LoopMode",
    "OraclePlanner",
    "Plan",
    "PlanParseError",
    "TaskSpec",
    "WorldState",
    "default_env",
    "oracle_plan",
    "parse_plan",
    "render_plan",
    "run_episode",
    "task_done",
]
