"""Failure diagnosis: typed explanations with fixed feedback templates.

The rule-based explainer names the first violated precondition of a failed
step.  Rendered text is deterministic: the missing-tool template starts
uppercase, all others lowercase.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum


class ExplanationKind(str, Enum):
    MISSING_TOOL = "missing_tool"
    MISSING_STATION = "missing_station"
    INSUFFICIENT_INPUT = "insufficient_input"
    INFEASIBLE_GOAL = "infeasible_goal"
    UNKNOWN_GOAL = "unknown_goal"


@dataclass
class Explanation:
    """Why a step could not execute.

    Field usage depends on ``kind``: tool failures fill ``verb``/``item``/
    ``required``; station failures fill ``station``; quantity failures fill
    ``item``/``need``/``have``; the rest carry free text in ``reason``.
    """

    kind: ExplanationKind
    step_index: int = 0
    verb: str = ""
    item: str = ""
    required: str = ""
    station: str = ""
    need: int = 0
    have: int = 0
    reason: str = ""

    def render(self) -> str:
        if self.kind is ExplanationKind.MISSING_TOOL:
            return f"Because {self.verb} {self.item} need to use the tool {self.required}."
        if self.kind is ExplanationKind.MISSING_STATION:
            return (
                f"because the action needs to use the tool {self.station},"
                f" but I do not have it."
            )
        if self.kind is ExplanationKind.INSUFFICIENT_INPUT:
            return (
                f"because the action needs {self.need} {self.item},"
                f" but I only have {self.have} {self.item}."
            )
        if self.kind is ExplanationKind.UNKNOWN_GOAL:
            return f'because I do not understand the goal "{self.reason}".'
        return f"because {self.reason}."


class NotAFailure(Exception):
    """Raised when asked to explain a step that actually passes its checks."""


def explain_rule_based(step_index, goal, state, env) -> Explanation:
    """Re-run the environment's precondition check and type the result.

    ``env`` is anything exposing ``check_preconditions(state, goal)``;
    raises :class:`NotAFailure` if the step passes (a harness bug).
    """
    explanation = env.check_preconditions(state, goal)
    if explanation is None:
        raise NotAFailure(f"step {step_index} passes preconditions")
    explanation.step_index = step_index
    return explanation


_TOOL_RE = re.compile(
    r"[Bb]ecause\s+(\w+)\s+(\w+)\s+need(?:s)?\s+to\s+use\s+the\s+tool\s+(\w+)\."
)
_STATION_RE = re.compile(
    r"because\s+.*needs?\s+to\s+use\s+the\s+tool\s+(\w+),\s*but\s+I\s+do\s+not\s+have\s+it"
)
_INPUT_RE = re.compile(
    r"because\s+.*needs?\s+(\d+)\s+(\w+),\s*but\s+I\s+only\s+have\s+(\d+)"
)


def parse_explanation(text: str, step_index: int = 0) -> Explanation:
    """Best-effort template match of a model-produced explainer line.

    Unmatched text is kept verbatim as an infeasible-goal explanation so
    the feedback loop can continue.
    """
    line = text.strip()
    if line.lower().startswith("explainer:"):
        line = line.split(":", 1)[1].strip()
    m = _STATION_RE.search(line)
    if m:
        return Explanation(
            ExplanationKind.MISSING_STATION, step_index=step_index, station=m.group(1)
        )
    m = _INPUT_RE.search(line)
    if m:
        return Explanation(
            ExplanationKind.INSUFFICIENT_INPUT,
            step_index=step_index,
            item=m.group(2),
            need=int(m.group(1)),
            have=int(m.group(3)),
        )
    m = _TOOL_RE.search(line)
    if m:
        return Explanation(
            ExplanationKind.MISSING_TOOL,
            step_index=step_index,
            verb=m.group(1),
            item=m.group(2),
            required=m.group(3),
        )
    return Explanation(
        ExplanationKind.INFEASIBLE_GOAL, step_index=step_index, reason=line
    )
