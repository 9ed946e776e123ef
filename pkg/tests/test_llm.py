"""Transcript bookkeeping, plan extraction, replay server, endpoint client."""
import json

import httpx
import pytest

from craftbench.describe import ExecTrace
from craftbench.explain import ExplanationKind
from craftbench.llm import (
    ChatClient,
    EndpointError,
    LLMPlanner,
    MockChatServer,
    PlanParseFailure,
    PromptTranscript,
    estimate_tokens,
    explain_llm,
    extract_plan,
    new_transcript,
)

from conftest import empty_state

PLAN_TEXT = (
    "def get_wood(inventory = {}):\n"
    "    mine({'log':1}, null); # action 1: mine 1 log without tool\n"
    "    return 'log'"
)


def test_extract_plan_from_fenced_block():
    reply = f"Sure, here you go:\n```python\n{PLAN_TEXT}\n```\nGood luck!"
    plan = extract_plan(reply)
    assert plan.name == "get_wood"


def test_extract_plan_from_bare_def_block():
    reply = f"The code for mining wood is as bellows:\n{PLAN_TEXT}\n"
    assert extract_plan(reply).return_item == "log"


def test_extract_plan_failure_without_code():
    with pytest.raises(PlanParseFailure):
        extract_plan("I cannot help with that.")


def test_token_estimate_monotone():
    transcript = PromptTranscript()
    previous = transcript.token_estimate
    for i in range(10):
        transcript.append("Agent", f"message number {i} with a few words")
        assert transcript.token_estimate >= previous
        previous = transcript.token_estimate
    assert transcript.token_estimate == sum(
        estimate_tokens(t.text) for t in transcript.turns
    )


def test_truncation_evicts_oldest_rounds_keeps_demos():
    transcript = PromptTranscript(token_cap=260)
    transcript.append("Agent", "preamble words here", protected=True)
    for demo in range(2):
        transcript.append("Planner", f"demonstration {demo} " + "word " * 40, protected=True)
    transcript.demonstrations = 2
    for round_id in range(6):
        transcript.append("Descriptor", f"round {round_id} " + "state " * 25)
        transcript.append("Planner", f"plan {round_id} " + "step " * 25)
        transcript.next_round()
    assert transcript.token_estimate <= 260
    rounds_left = {t.round_id for t in transcript.turns if t.round_id >= 0}
    assert rounds_left, "someone must survive"
    assert min(rounds_left) > 0  # the oldest rounds went first
    assert sum(1 for t in transcript.turns if t.round_id == -1) == 3  # protected stayed


def test_new_transcript_has_two_demonstrations():
    transcript = new_transcript()
    assert transcript.demonstrations == 2
    assert transcript.turns[0].role == "Agent"
    assert transcript.token_estimate <= transcript.token_cap


def test_to_messages_roles():
    transcript = PromptTranscript()
    transcript.append("Agent", "How to craft 1 stick?")
    transcript.append("Planner", "OK.")
    messages = transcript.to_messages()
    assert messages[0] == {"role": "user", "content": "Agent: How to craft 1 stick?"}
    assert messages[1]["role"] == "assistant"


def test_mock_server_replays_in_order():
    with MockChatServer(["first", "second"]) as server:
        client = ChatClient(base_url=server.url)
        assert client.complete([{"role": "user", "content": "x"}]) == "first"
        assert client.complete([{"role": "user", "content": "x"}]) == "second"
        with pytest.raises(EndpointError):
            client.complete([{"role": "user", "content": "x"}])  # exhausted -> 410


def test_mock_server_from_file(tmp_path):
    path = tmp_path / "replies.json"
    path.write_text(json.dumps({"replies": ["hello"]}))
    with MockChatServer.from_file(path) as server:
        reply = httpx.post(
            server.url + "/chat/completions", json={"model": "m", "messages": []}
        ).json()
        assert reply["choices"][0]["message"]["content"] == "hello"


def test_client_endpoint_error_when_down():
    client = ChatClient(base_url="http://127.0.0.1:9", timeout=0.2)
    with pytest.raises(EndpointError):
        client.complete([{"role": "user", "content": "x"}])


def test_llm_planner_round_trip(env, tasks, fresh_state):
    replies = [
        PLAN_TEXT,
        PLAN_TEXT.replace("{'log':1}", "{'log':2}"),
    ]
    with MockChatServer(replies) as server:
        planner = LLMPlanner(ChatClient(base_url=server.url))
        plan = planner.initial_plan(tasks["planks"], fresh_state, None)
        assert plan.step(1).count == 1
        trace = ExecTrace([1], None, 0)
        revised = planner.replan(
            tasks["planks"], fresh_state, trace, None, description="I locate in plains biome."
        )
        assert revised.step(1).count == 2
        roles = [t.role for t in planner.transcript.turns]
        assert roles[-3:] == ["Explainer", "Replanner", "Planner"]
        replanner_text = [t.text for t in planner.transcript.turns if t.role == "Replanner"][-1]
        assert replanner_text == 'Please fix above errors and replan the task "How to craft 1 planks".'


def test_llm_planner_unparseable_reply(env, tasks, fresh_state):
    with MockChatServer(["no code here, sorry"]) as server:
        planner = LLMPlanner(ChatClient(base_url=server.url))
        with pytest.raises(PlanParseFailure):
            planner.initial_plan(tasks["planks"], fresh_state, None)


def test_explain_llm_parses_template(env, fresh_state):
    line = "Explainer: because the action needs 3 cobblestone, but I only have 2 cobblestone."
    with MockChatServer([line]) as server:
        client = ChatClient(base_url=server.url)
        explanation = explain_llm(client, PromptTranscript(), (7, "craft(...)"), "I fail on step 7")
        assert explanation.kind is ExplanationKind.INSUFFICIENT_INPUT
        assert explanation.step_index == 7


def test_explain_llm_gibberish_falls_back_to_raw(env):
    with MockChatServer(["the moon is made of cheese"]) as server:
        client = ChatClient(base_url=server.url)
        explanation = explain_llm(client, PromptTranscript(), (1, "x"), "d")
        assert explanation.kind is ExplanationKind.INFEASIBLE_GOAL
        assert "cheese" in explanation.reason


def test_explain_llm_endpoint_down_raises(env, fresh_state):
    client = ChatClient(base_url="http://127.0.0.1:9", timeout=0.2)
    with pytest.raises(EndpointError):
        explain_llm(client, PromptTranscript(), (1, "x"), "d")
    # callers fall back to the rule-based explainer
    from craftbench.dsl import parse_call
    from craftbench.explain import explain_rule_based

    explanation = explain_rule_based(
        1, parse_call("mine({'cobblestone':1}, null);"), fresh_state, env
    )
    assert explanation.kind is ExplanationKind.MISSING_TOOL
