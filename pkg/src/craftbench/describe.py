"""Event-triggered feedback text: state + execution trace -> d_t lines.

Per-step successes are buffered by the agent and flushed here with the
next failure or completion event.  Output is a pure function of its
arguments; no timestamps, no randomness.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .world import WorldState


@dataclass
class ExecTrace:
    """What happened since the previous feedback event."""

    succeeded_steps: list[int] = field(default_factory=list)
    failed_step: tuple[int, str] | None = None  # (index, rendered call)
    round_id: int = 0
    finished: bool = False


def describe_lines(state: WorldState, trace: ExecTrace) -> list[str]:
    """Feedback lines, in fixed order.

    - ``I succeed on step i, j, k.`` when steps succeeded this round
    - location + inventory (acquisition order, zero counts omitted),
      skipped on task completion
    - ``I fail on step k "<call>".`` or ``Good. I finish the task.``
    """
    lines: list[str] = []
    if trace.succeeded_steps:
        listed = ", ".join(str(i) for i in trace.succeeded_steps)
        lines.append(f"I succeed on step {listed}.")
    if trace.finished:
        lines.append("Good. I finish the task.")
        return lines
    items = state.inventory_in_order()
    if items:
        listed = ", ".join(f"{count} {item}" for item, count in items)
    else:
        listed = "nothing"
    lines.append(f"I locate in {state.biome} biome. My inventory now has {listed}.")
    if trace.failed_step is not None:
        index, call_text = trace.failed_step
        lines.append(f'I fail on step {index} "{call_text}".')
    return lines


def describe(state: WorldState, trace: ExecTrace) -> str:
    return "\n".join(describe_lines(state, trace))
