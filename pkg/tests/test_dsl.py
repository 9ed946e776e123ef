"""Parser and renderer: golden listings, round trips, fuzzed errors."""
import numpy as np
import pytest

from craftbench.dsl import (
    GoalCall,
    GoalVerb,
    ParseErrorKind,
    Plan,
    PlanParseError,
    describe_call,
    parse_call,
    parse_plan,
    render_call,
    render_plan,
)

SIMPLE = """
def craft_stone_sword(inventory = {}):
    mine({'log':3}, null); # action 1: mine 3 log without tool
    craft({'planks':12}, {'log':3}, null); # action 2: craft 12 planks from 3 log
    return 'stone_sword'
"""


def test_parse_simple_plan():
    plan = parse_plan(SIMPLE)
    assert plan.name == "craft_stone_sword"
    assert plan.return_item == "stone_sword"
    assert len(plan.steps) == 2
    first = plan.step(1)
    assert first.verb is GoalVerb.MINE
    assert first.outputs == {"log": 3}
    assert first.tool is None
    assert first.inputs == {}
    second = plan.step(2)
    assert second.verb is GoalVerb.CRAFT
    assert second.inputs == {"log": 3}
    assert second.station is None


def test_parse_mine_call_keeps_tool_absent():
    call = parse_call("mine({'log':3}, null);")
    assert call == GoalCall(GoalVerb.MINE, {"log": 3})


def test_parse_station_and_multi_input():
    call = parse_call(
        "craft({'wooden_pickaxe':1}, {'planks':3, 'stick':2}, 'crafting_table');"
    )
    assert call.station == "crafting_table"
    assert call.inputs == {"planks": 3, "stick": 2}


def test_bare_keys_accepted_quoted_canonical():
    call = parse_call("craft({wooden_pickaxe:1}, {planks:3, stick:2}, crafting_table);")
    assert call.outputs == {"wooden_pickaxe": 1}
    assert render_call(call) == (
        "craft({'wooden_pickaxe':1}, {'planks':3, 'stick':2}, 'crafting_table');"
    )


def test_two_argument_craft_has_no_station():
    call = parse_call("craft({'planks':4}, {'log':1});")
    assert call.station is None
    assert render_call(call) == "craft({'planks':4}, {'log':1}, null);"


def test_smelt_alias_category():
    call = parse_call("craft({'iron_ingot':1}, {'iron_ore':1}, 'furnace');")
    assert call.verb is GoalVerb.CRAFT
    assert call.category() is GoalVerb.SMELT
    assert parse_call("smelt({'iron_ingot':1}, {'iron_ore':1}, 'furnace');").category() is GoalVerb.SMELT


def test_comment_stored_verbatim_but_not_compared():
    a = parse_call("mine({'log':3}, null); # whatever text 123")
    b = parse_call("mine({'log':3}, null); # action 1: mine 3 log without tool")
    assert a == b
    assert a.comment == "whatever text 123"


def test_whitespace_only_input_is_empty_plan():
    with pytest.raises(PlanParseError) as err:
        parse_plan("   \n \t \n")
    assert err.value.kind is ParseErrorKind.EMPTY_PLAN
    assert err.value.line == 1 and err.value.column == 1


def test_render_comment_format():
    plan = Plan("get_wood", [GoalCall(GoalVerb.MINE, {"log": 3})], "log")
    text = render_plan(plan)
    assert "mine({'log':3}, null); # action 1: mine 3 log without tool" in text


@pytest.mark.parametrize(
    "call,expected",
    [
        (GoalCall(GoalVerb.MINE, {"log": 3}), "mine 3 log without tool"),
        (
            GoalCall(GoalVerb.MINE, {"cobblestone": 2}, tool="wooden_pickaxe"),
            "mine 2 cobblestone with wooden_pickaxe",
        ),
        (
            GoalCall(GoalVerb.CRAFT, {"planks": 12}, {"log": 3}),
            "craft 12 planks from 3 log",
        ),
        (
            GoalCall(
                GoalVerb.CRAFT,
                {"wooden_pickaxe": 1},
                {"planks": 3, "stick": 2},
                station="crafting_table",
            ),
            "craft 1 wooden_pickaxe from 3 planks and 2 stick, on crafting_table",
        ),
        (
            GoalCall(GoalVerb.CRAFT, {"iron_ingot": 1}, {"iron_ore": 1}, station="furnace"),
            "craft 1 iron_ingot from 1 iron_ore, on furnace",
        ),
    ],
)
def test_describe_call(call, expected):
    assert describe_call(call) == expected


def test_empty_step_plan_renders_header_and_return():
    text = render_plan(Plan("noop", [], "log"))
    assert text == "def noop(inventory = {}):\n    return 'log'\n"
    assert parse_plan(text) == Plan("noop", [], "log")


@pytest.mark.parametrize(
    "source,kind",
    [
        ("def p(inventory = {}):\n    fly({'x':1}, null);\n    return 'x'", ParseErrorKind.UNKNOWN_VERB),
        ("def p(inventory = {}):\n    mine({'x':0}, null);\n    return 'x'", ParseErrorKind.MALFORMED_DICT),
        ("def p(inventory = {}):\n    mine({}, null);\n    return 'x'", ParseErrorKind.MALFORMED_DICT),
        ("def p(inventory = {}):\n    mine({'x':1}, {'y':1});\n    return 'x'", ParseErrorKind.MALFORMED_DICT),
        ("def p(inventory = {}):\n    craft({'x':1}, null);\n    return 'x'", ParseErrorKind.MALFORMED_DICT),
        ("def p(inventory = {}):\n    mine({'x':1}, null)\n    return 'x'", ParseErrorKind.MISSING_SEPARATOR),
        ("def p(inventory = {}):\n    mine({'x':1} null);\n    return 'x'", ParseErrorKind.MISSING_SEPARATOR),
        ("def p(inventory = {}):\n    mine({'x':1}, null);", ParseErrorKind.BAD_RETURN),
        ("def p(inventory = {}):\n    return x", ParseErrorKind.BAD_RETURN),
        ("not a plan at all", ParseErrorKind.EMPTY_PLAN),
    ],
)
def test_error_kinds(source, kind):
    with pytest.raises(PlanParseError) as err:
        parse_plan(source)
    assert err.value.kind is kind


def test_error_position_points_into_text():
    source = "def p(inventory = {}):\n    mine({'x':1}, null)\n    return 'x'"
    with pytest.raises(PlanParseError) as err:
        parse_plan(source)
    lines = source.splitlines()
    assert 1 <= err.value.line <= len(lines)
    assert 1 <= err.value.column <= len(lines[err.value.line - 1]) + 1


def test_golden_corpus_round_trip(golden):
    from craftbench.llm import extract_plan

    for episode in golden.values():
        for reply in episode["replies"]:
            plan = extract_plan(reply)
            once = render_plan(plan)
            again = render_plan(parse_plan(once))
            assert once == again
            assert parse_plan(once) == plan


ITEMS = ["log", "planks", "stick", "cobblestone", "iron_ore", "diamond", "furnace"]
TOOLS = [None, "wooden_pickaxe", "stone_pickaxe", "iron_pickaxe"]
STATIONS = [None, "crafting_table", "furnace"]


def random_plan(rng: np.random.Generator) -> Plan:
    steps = []
    for _ in range(int(rng.integers(0, 8))):
        verb = [GoalVerb.MINE, GoalVerb.CRAFT, GoalVerb.KILL, GoalVerb.EQUIP][int(rng.integers(4))]
        outputs = {str(rng.choice(ITEMS)): int(rng.integers(1, 20))}
        if verb in (GoalVerb.MINE, GoalVerb.KILL, GoalVerb.EQUIP):
            call = GoalCall(verb, outputs, tool=TOOLS[int(rng.integers(len(TOOLS)))])
        else:
            inputs = {
                str(item): int(rng.integers(1, 9))
                for item in rng.choice(ITEMS, size=int(rng.integers(1, 4)), replace=False)
            }
            call = GoalCall(verb, outputs, inputs, station=STATIONS[int(rng.integers(3))])
        steps.append(call)
    name = f"plan_{int(rng.integers(1_000_000))}"
    return Plan(name, steps, str(rng.choice(ITEMS)))


def test_fuzz_round_trip_idempotent():
    rng = np.random.default_rng(20240809)
    for _ in range(1000):
        plan = random_plan(rng)
        text = render_plan(plan)
        parsed = parse_plan(text)
        assert parsed == plan
        assert render_plan(parsed) == text


def test_fuzz_corrupted_text_error_positions():
    rng = np.random.default_rng(99)
    garbage = list(";{}(),'#xq@")
    for _ in range(400):
        plan = random_plan(rng)
        text = render_plan(plan)
        pos = int(rng.integers(0, len(text)))
        mutated = text[:pos] + str(rng.choice(garbage)) + text[pos:]
        try:
            parse_plan(mutated)
        except PlanParseError as err:
            lines = mutated.splitlines() or [""]
            assert 1 <= err.line <= len(lines)
            assert err.column >= 1
            assert err.column <= len(lines[err.line - 1]) + 1


def test_index_integrity_ignores_comment_content():
    source = (
        "def p(inventory = {}):\n"
        "    mine({'log':1}, null); # action 9: bogus numbering\n"
        "    mine({'log':2}, null); # no action marker at all\n"
        "    return 'log'\n"
    )
    plan = parse_plan(source)
    assert [c.count for c in plan.steps] == [1, 2]


# ----------------------------------------------------------------------
# hypothesis strategies over structured plans

from hypothesis import given, settings
from hypothesis import strategies as st

item_names = st.sampled_from(ITEMS)
counts = st.integers(min_value=1, max_value=64)


@st.composite
def goal_calls(draw):
    verb = draw(st.sampled_from([GoalVerb.MINE, GoalVerb.CRAFT, GoalVerb.KILL, GoalVerb.EQUIP]))
    outputs = {draw(item_names): draw(counts)}
    if verb in (GoalVerb.MINE, GoalVerb.KILL, GoalVerb.EQUIP):
        return GoalCall(verb, outputs, tool=draw(st.sampled_from(TOOLS)))
    inputs = draw(
        st.dictionaries(item_names, counts, min_size=1, max_size=3)
    )
    return GoalCall(verb, outputs, inputs, station=draw(st.sampled_from(STATIONS)))


@st.composite
def plans(draw):
    steps = draw(st.lists(goal_calls(), max_size=6))
    name = draw(st.from_regex(r"[a-z][a-z0-9_]{0,20}", fullmatch=True))
    return Plan(name, steps, draw(item_names))


@settings(max_examples=200)
@given(plans())
def test_hypothesis_round_trip(plan):
    text = render_plan(plan)
    parsed = parse_plan(text)
    assert parsed == plan
    assert render_plan(parsed) == text


@settings(max_examples=100)
@given(goal_calls(), st.text(alphabet=st.characters(blacklist_categories=("Cs", "Cc")), max_size=40))
def test_hypothesis_comments_never_change_calls(call, noise):
    line = f"{render_call(call)} # {noise}"
    if "\n" in line or "\r" in line:
        return
    assert parse_call(line) == call
