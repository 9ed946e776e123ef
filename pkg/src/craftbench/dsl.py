"""Goal-plan DSL: parsing, canonical rendering, and call classification.

A plan is a tiny pythonic program: a ``def`` header, one goal call per
line, and a ``return`` naming the target item::

    def craft_stone_sword(inventory = {}):
        mine({'log':3}, null); # action 1: mine 3 log without tool
        craft({'planks':12}, {'log':3}, null); # action 2: craft 12 planks from 3 log
        return 'stone_sword'

``mine``/``kill``/``equip`` take an output dict and a tool (or ``null``);
``craft``/``smelt`` take an output dict, an input dict, and an optional
station.  Dict keys may be quoted or bare; the canonical renderer always
emits quoted keys and regenerates ``# action k:`` comments.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum


class GoalVerb(str, Enum):
    MINE = "mine"
    CRAFT = "craft"
    SMELT = "smelt"
    KILL = "kill"
    EQUIP = "equip"


#: Verbs whose second argument is a tool and whose inputs are empty.
GATHER_VERBS = (GoalVerb.MINE, GoalVerb.KILL, GoalVerb.EQUIP)


class ParseErrorKind(str, Enum):
    UNKNOWN_VERB = "UnknownVerb"
    MALFORMED_DICT = "MalformedDict"
    MISSING_SEPARATOR = "MissingSeparator"
    EMPTY_PLAN = "EmptyPlan"
    BAD_RETURN = "BadReturn"


class PlanParseError(Exception):
    """Parse failure with a 1-based source position."""

    def __init__(self, kind: ParseErrorKind, message: str, line: int, column: int):
        super().__init__(f"{kind.value} at {line}:{column}: {message}")
        self.kind = kind
        self.message = message
        self.line = line
        self.column = column


@dataclass
class GoalCall:
    """One goal statement.  ``comment`` is carried but never compared."""

    verb: GoalVerb
    outputs: dict[str, int]
    inputs: dict[str, int] = field(default_factory=dict)
    tool: str | None = None
    station: str | None = None
    comment: str | None = field(default=None, compare=False)

    @property
    def item(self) -> str:
        """Primary output item (first key)."""
        return next(iter(self.outputs))

    @property
    def count(self) -> int:
        return self.outputs[self.item]

    def category(self) -> GoalVerb:
        """Skill category; a craft on a furnace counts as a smelt."""
        if self.verb is GoalVerb.CRAFT and self.station == "furnace":
            return GoalVerb.SMELT
        return self.verb


@dataclass
class Plan:
    name: str
    steps: list[GoalCall]
    return_item: str

    def step(self, index: int) -> GoalCall:
        """1-based step access, matching plan comments and feedback text."""
        return self.steps[index - 1]

    def milestones(self) -> list[str]:
        """Distinct output items in first-appearance order."""
        seen: list[str] = []
        for call in self.steps:
            for item in call.outputs:
                if item not in seen:
                    seen.append(item)
        return seen


_HEADER_RE = re.compile(
    r"^(\s*)def\s+([A-Za-z_][A-Za-z0-9_]*)\s*\(\s*inventory\s*=\s*\{\s*\}\s*\)\s*:\s*$"
)
_RETURN_RE = re.compile(r"^(\s*)return\s+'([A-Za-z_][A-Za-z0-9_]*)'\s*;?\s*$")
_RETURN_ANY_RE = re.compile(r"^\s*return\b")


class _LineScanner:
    """Cursor over a single source line with 1-based column reporting."""

    def __init__(self, text: str, lineno: int):
        self.text = text
        self.lineno = lineno
        self.pos = 0

    @property
    def column(self) -> int:
        return min(self.pos, max(len(self.text) - 1, 0)) + 1

    def error(self, kind: ParseErrorKind, message: str) -> PlanParseError:
        return PlanParseError(kind, message, self.lineno, self.column)

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, char: str) -> None:
        self.skip_ws()
        if self.peek() != char:
            got = repr(self.peek()) if self.peek() else "end of line"
            raise self.error(
                ParseErrorKind.MISSING_SEPARATOR, f"expected {char!r}, got {got}"
            )
        self.pos += 1

    def match_name(self) -> str | None:
        self.skip_ws()
        m = re.match(r"[A-Za-z_][A-Za-z0-9_]*", self.text[self.pos :])
        if not m:
            return None
        self.pos += m.end()
        return m.group(0)

    def match_int(self) -> int | None:
        self.skip_ws()
        m = re.match(r"-?\d+", self.text[self.pos :])
        if not m:
            return None
        self.pos += m.end()
        return int(m.group(0))


def _parse_key(scanner: _LineScanner) -> str:
    scanner.skip_ws()
    if scanner.peek() in ("'", '"'):
        quote = scanner.peek()
        scanner.pos += 1
        name = scanner.match_name()
        if name is None:
            raise scanner.error(ParseErrorKind.MALFORMED_DICT, "empty quoted key")
        if scanner.peek() != quote:
            raise scanner.error(ParseErrorKind.MALFORMED_DICT, "unterminated quoted key")
        scanner.pos += 1
        return name
    name = scanner.match_name()
    if name is None:
        raise scanner.error(ParseErrorKind.MALFORMED_DICT, "expected item key")
    return name


def _parse_dict(scanner: _LineScanner, what: str) -> dict[str, int]:
    scanner.skip_ws()
    if scanner.peek() != "{":
        raise scanner.error(ParseErrorKind.MALFORMED_DICT, f"expected {{...}} for {what}")
    scanner.pos += 1
    items: dict[str, int] = {}
    scanner.skip_ws()
    if scanner.peek() == "}":
        scanner.pos += 1
        return items
    while True:
        key = _parse_key(scanner)
        scanner.skip_ws()
        if scanner.peek() != ":":
            raise scanner.error(ParseErrorKind.MALFORMED_DICT, "expected ':' after key")
        scanner.pos += 1
        count = scanner.match_int()
        if count is None:
            raise scanner.error(ParseErrorKind.MALFORMED_DICT, f"expected count for {key!r}")
        if count < 1:
            raise scanner.error(
                ParseErrorKind.MALFORMED_DICT, f"count for {key!r} must be >= 1"
            )
        if key in items:
            raise scanner.error(ParseErrorKind.MALFORMED_DICT, f"duplicate key {key!r}")
        items[key] = count
        scanner.skip_ws()
        if scanner.peek() == ",":
            scanner.pos += 1
            continue
        if scanner.peek() == "}":
            scanner.pos += 1
            return items
        raise scanner.error(ParseErrorKind.MALFORMED_DICT, "expected ',' or '}' in dict")


def _parse_atom(scanner: _LineScanner) -> str | None:
    """A tool/station argument: ``null``, ``'item'`` or bare ``item``."""
    scanner.skip_ws()
    if scanner.peek() in ("'", '"'):
        return _parse_key(scanner)
    name = scanner.match_name()
    if name is None:
        raise scanner.error(
            ParseErrorKind.MISSING_SEPARATOR, "expected null or an item name"
        )
    if name in ("null", "None", "none"):
        return None
    return name


def _parse_statement(scanner: _LineScanner) -> GoalCall:
    verb_name = scanner.match_name()
    if verb_name is None:
        raise scanner.error(ParseErrorKind.UNKNOWN_VERB, "expected a goal verb")
    try:
        verb = GoalVerb(verb_name)
    except ValueError:
        raise scanner.error(
            ParseErrorKind.UNKNOWN_VERB, f"unknown verb {verb_name!r}"
        ) from None
    scanner.expect("(")
    outputs = _parse_dict(scanner, "outputs")
    if not outputs:
        raise scanner.error(ParseErrorKind.MALFORMED_DICT, "outputs must be non-empty")
    scanner.expect(",")
    tool: str | None = None
    inputs: dict[str, int] = {}
    station: str | None = None
    if verb in GATHER_VERBS:
        scanner.skip_ws()
        if scanner.peek() == "{":
            raise scanner.error(
                ParseErrorKind.MALFORMED_DICT,
                f"{verb.value} takes a tool or null, not an input dict",
            )
        tool = _parse_atom(scanner)
    else:
        scanner.skip_ws()
        if scanner.peek() != "{":
            raise scanner.error(
                ParseErrorKind.MALFORMED_DICT, f"{verb.value} requires an input dict"
            )
        inputs = _parse_dict(scanner, "inputs")
        if not inputs:
            raise scanner.error(ParseErrorKind.MALFORMED_DICT, "inputs must be non-empty")
        scanner.skip_ws()
        if scanner.peek() == ",":
            scanner.pos += 1
            station = _parse_atom(scanner)
    scanner.expect(")")
    scanner.skip_ws()
    if scanner.peek() != ";":
        raise scanner.error(ParseErrorKind.MISSING_SEPARATOR, "expected ';' after call")
    scanner.pos += 1
    scanner.skip_ws()
    comment = None
    if scanner.peek() == "#":
        comment = scanner.text[scanner.pos + 1 :].strip()
        scanner.pos = len(scanner.text)
    elif scanner.pos < len(scanner.text) and scanner.text[scanner.pos :].strip():
        raise scanner.error(
            ParseErrorKind.MISSING_SEPARATOR, "unexpected trailing text after ';'"
        )
    return GoalCall(verb, outputs, inputs, tool, station, comment)


def parse_call(text: str, lineno: int = 1) -> GoalCall:
    """Parse a single goal statement (with or without trailing ``;``)."""
    stripped = text.rstrip()
    try:
        return _parse_statement(_LineScanner(stripped, lineno))
    except PlanParseError:
        if ";" not in stripped:
            return _parse_statement(_LineScanner(stripped + ";", lineno))
        raise


def parse_plan(text: str) -> Plan:
    """Parse DSL source into a :class:`Plan`.

    All-or-nothing: any malformed line raises :class:`PlanParseError`
    pointing at the offending position.
    """
    lines = text.splitlines()
    numbered = [(i + 1, ln) for i, ln in enumerate(lines)]
    content = [(n, ln) for n, ln in numbered if ln.strip()]
    if not content:
        raise PlanParseError(ParseErrorKind.EMPTY_PLAN, "no plan in input", 1, 1)

    header_no, header = content[0]
    m = _HEADER_RE.match(header)
    if not m:
        raise PlanParseError(
            ParseErrorKind.EMPTY_PLAN,
            "expected 'def name(inventory = {}):' header",
            header_no,
            len(header) - len(header.lstrip()) + 1,
        )
    name = m.group(2)

    steps: list[GoalCall] = []
    return_item: str | None = None
    for n, ln in content[1:]:
        if return_item is not None:
            raise PlanParseError(
                ParseErrorKind.BAD_RETURN,
                "content after return line",
                n,
                len(ln) - len(ln.lstrip()) + 1,
            )
        rm = _RETURN_RE.match(ln)
        if rm:
            return_item = rm.group(2)
            continue
        if _RETURN_ANY_RE.match(ln):
            raise PlanParseError(
                ParseErrorKind.BAD_RETURN,
                "expected return 'item'",
                n,
                len(ln) - len(ln.lstrip()) + 1,
            )
        steps.append(_parse_statement(_LineScanner(ln, n)))
    if return_item is None:
        last_no, last = content[-1]
        raise PlanParseError(
            ParseErrorKind.BAD_RETURN, "missing return 'item' line", last_no, len(last)
        )
    return Plan(name, steps, return_item)


def _render_dict(items: dict[str, int]) -> str:
    body = ", ".join(f"'{k}':{v}" for k, v in items.items())
    return "{" + body + "}"


def render_call(call: GoalCall) -> str:
    """Canonical one-line form, e.g. ``mine({'log':3}, null);``."""
    if call.verb in GATHER_VERBS:
        second = f"'{call.tool}'" if call.tool else "null"
        return f"{call.verb.value}({_render_dict(call.outputs)}, {second});"
    third = f"'{call.station}'" if call.station else "null"
    return f"{call.verb.value}({_render_dict(call.outputs)}, {_render_dict(call.inputs)}, {third});"


def _counted(items: dict[str, int]) -> str:
    parts = [f"{v} {k}" for k, v in items.items()]
    if len(parts) <= 1:
        return parts[0] if parts else ""
    return ", ".join(parts[:-1]) + " and " + parts[-1]


def describe_call(call: GoalCall) -> str:
    """Human-readable phrase used in regenerated ``# action k:`` comments."""
    if call.verb in (GoalVerb.MINE, GoalVerb.KILL):
        how = f"with {call.tool}" if call.tool else "without tool"
        return f"{call.verb.value} {call.count} {call.item} {how}"
    if call.verb is GoalVerb.EQUIP:
        return f"equip {call.count} {call.item}"
    text = f"{call.verb.value} {call.count} {call.item} from {_counted(call.inputs)}"
    if call.station:
        text += f", on {call.station}"
    return text


def render_plan(plan: Plan) -> str:
    """Canonical source text; comments are regenerated, keys quoted."""
    lines = [f"def {plan.name}(inventory = {{}}):"]
    for i, call in enumerate(plan.steps, 1):
        lines.append(f"    {render_call(call)} # action {i}: {describe_call(call)}")
    lines.append(f"    return '{plan.return_item}'")
    return "\n".join(lines) + "\n"
