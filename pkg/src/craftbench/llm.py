"""Chat-endpoint planner: prompt transcript, client, and replay server.

The transcript is an ordered dialogue of Agent / Planner / Descriptor /
Explainer / Replanner turns.  Its token estimate (whitespace tokens times
1.3) is kept under a cap by evicting the oldest completed feedback rounds;
the system preamble, the embedded demonstrations and the current task turn
are never evicted.

The wire format is an OpenAI-style chat completion: POST a JSON body with
``model``, ``messages`` and ``temperature``; read
``choices[0].message.content``.  A small replay server serves canned
replies for offline runs and tests.
"""
from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from pathlib import Path

import httpx

from .describe import ExecTrace
from .dsl import Plan, PlanParseError, parse_plan
from .explain import Explanation, parse_explanation
from .world import TaskSpec, WorldState

TOKEN_CAP = 8000
TOKEN_FACTOR = 1.3

REPLAN_TEMPLATE = 'Please fix above errors and replan the task "{task}".'


class EndpointError(Exception):
    pass


class PlanParseFailure(Exception):
    def __init__(self, reply: str, cause: str):
        super().__init__(f"could not extract a plan from reply: {cause}")
        self.reply = reply
        self.cause = cause


@dataclass
class Turn:
    role: str  # Agent | Planner | Descriptor | Explainer | Replanner
    text: str
    round_id: int = -1  # -1 marks protected turns (preamble, demos, task)


def estimate_tokens(text: str) -> int:
    return int(len(text.split()) * TOKEN_FACTOR)


@dataclass
class PromptTranscript:
    turns: list[Turn] = field(default_factory=list)
    demonstrations: int = 0
    token_cap: int = TOKEN_CAP
    token_estimate: int = 0
    _round: int = 0

    def append(self, role: str, text: str, protected: bool = False) -> None:
        self.turns.append(Turn(role, text, -1 if protected else self._round))
        self.token_estimate = sum(estimate_tokens(t.text) for t in self.turns)
        self._truncate()

    def next_round(self) -> None:
        self._round += 1

    def _truncate(self) -> None:
        while self.token_estimate > self.token_cap:
            evictable = sorted(
                {t.round_id for t in self.turns if t.round_id >= 0 and t.round_id < self._round}
            )
            if not evictable:
                break
            oldest = evictable[0]
            self.turns = [t for t in self.turns if t.round_id != oldest]
            self.token_estimate = sum(estimate_tokens(t.text) for t in self.turns)

    def to_messages(self) -> list[dict[str, str]]:
        """OpenAI-style messages; the model speaks as the Planner."""
        messages = []
        for turn in self.turns:
            role = "assistant" if turn.role == "Planner" else "user"
            messages.append({"role": role, "content": f"{turn.role}: {turn.text}"})
        return messages

    def render(self) -> str:
        return "\n".join(f"{t.role}: {t.text}" for t in self.turns)


@dataclass
class ChatClient:
    base_url: str
    api_key: str = ""
    model: str = "default"
    temperature: float | None = None
    timeout: float = 60.0

    @classmethod
    def from_env(cls) -> "ChatClient":
        base = os.environ.get("LLM_BASE_URL", "")
        if not base:
            raise EndpointError("LLM_BASE_URL is not set")
        return cls(
            base_url=base,
            api_key=os.environ.get("LLM_API_KEY", ""),
            model=os.environ.get("LLM_MODEL", "default"),
        )

    def _http(self) -> httpx.Client:
        client = getattr(self, "_client", None)
        if client is None or client.is_closed:
            client = httpx.Client(timeout=self.timeout)
            object.__setattr__(self, "_client", client)
        return client

    def complete(self, messages: list[dict[str, str]]) -> str:
        url = self.base_url.rstrip("/")
        if not url.endswith("/chat/completions"):
            url += "/chat/completions"
        payload: dict = {"model": self.model, "messages": messages}
        if self.temperature is not None:
            payload["temperature"] = self.temperature
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = self._http().post(url, json=payload, headers=headers)
            response.raise_for_status()
            data = response.json()
            return str(data["choices"][0]["message"]["content"])
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise EndpointError(str(exc)) from exc


_FENCE_RE = re.compile(r"```(?:\w+)?\n(.*?)```", re.DOTALL)


def extract_plan(reply: str) -> Plan:
    """Pull the plan out of a model reply: fenced block or bare def-block."""
    m = _FENCE_RE.search(reply)
    if m:
        try:
            return parse_plan(m.group(1))
        except PlanParseError as exc:
            raise PlanParseFailure(reply, str(exc)) from exc
    lines = reply.splitlines()
    start = next((i for i, ln in enumerate(lines) if ln.lstrip().startswith("def ")), None)
    if start is None:
        raise PlanParseFailure(reply, "no code block or def header in reply")
    end = len(lines)
    for i in range(start + 1, len(lines)):
        if lines[i].lstrip().startswith("return "):
            end = i + 1
            break
    try:
        return parse_plan("\n".join(lines[start:end]))
    except PlanParseError as exc:
        raise PlanParseFailure(reply, str(exc)) from exc


def _load_prompts() -> dict:
    ref = resources.files("craftbench.data").joinpath("prompts.json")
    return json.loads(ref.read_text())


def new_transcript(token_cap: int = TOKEN_CAP) -> PromptTranscript:
    """Transcript seeded with the system preamble and two demonstrations."""
    prompts = _load_prompts()
    transcript = PromptTranscript(token_cap=token_cap)
    transcript.append("Agent", prompts["preamble"], protected=True)
    transcript.append("Planner", "OK.", protected=True)
    for demo in prompts["demonstrations"]:
        for turn in demo:
            transcript.append(turn["role"], turn["text"], protected=True)
    transcript.demonstrations = len(prompts["demonstrations"])
    return transcript


class LLMPlanner:
    """Chat-endpoint planner implementing the interactive feedback protocol."""

    name = "llm"

    def __init__(
        self,
        client: ChatClient,
        token_cap: int = TOKEN_CAP,
        explain_with_llm: bool = False,
    ):
        self.client = client
        self.token_cap = token_cap
        self.explain_with_llm = explain_with_llm
        self.transcript = new_transcript(token_cap)

    def initial_plan(self, task: TaskSpec, state: WorldState, rng) -> Plan:
        self.transcript = new_transcript(self.token_cap)
        question = task.prompt if task.prompt.endswith("?") else task.prompt + "?"
        self.transcript.append("Agent", question, protected=True)
        reply = self.client.complete(self.transcript.to_messages())
        self.transcript.append("Planner", reply)
        plan = extract_plan(reply)
        self.transcript.next_round()
        return plan

    def replan(
        self,
        task: TaskSpec,
        state: WorldState,
        trace: ExecTrace,
        explanation: Explanation | None,
        description: str = "",
    ) -> Plan:
        for line in description.splitlines():
            self.transcript.append("Descriptor", line)
        self.transcript.append(
            "Explainer", explanation.render() if explanation is not None else ""
        )
        self.transcript.append("Replanner", REPLAN_TEMPLATE.format(task=task.prompt))
        reply = self.client.complete(self.transcript.to_messages())
        self.transcript.append("Planner", reply)
        plan = extract_plan(reply)
        self.transcript.next_round()
        return plan

    def note_completion(self, description: str) -> None:
        for line in description.splitlines():
            self.transcript.append("Descriptor", line)
        self.transcript.append("Planner", "OK.")


def explain_llm(
    client: ChatClient,
    transcript: PromptTranscript,
    failed_step: tuple[int, str],
    description: str,
) -> Explanation:
    """Ask the endpoint to explain a failure; fall back to raw text."""
    prompt = PromptTranscript(token_cap=transcript.token_cap)
    prompt.turns = list(transcript.turns)
    for line in description.splitlines():
        prompt.append("Descriptor", line)
    prompt.append("Replanner", "Explain why the failed step cannot be executed.")
    reply = client.complete(prompt.to_messages())
    return parse_explanation(reply, step_index=failed_step[0])


# ----------------------------------------------------------------------
# replay server

class _ReplayState:
    def __init__(self, replies: list[str]):
        self.replies = replies
        self.cursor = 0
        self.lock = threading.Lock()

    def next_reply(self) -> str:
        with self.lock:
            if self.cursor >= len(self.replies):
                return ""
            reply = self.replies[self.cursor]
            self.cursor += 1
            return reply


def _make_handler(state: _ReplayState):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"  # keep-alive for cheap replays

        def log_message(self, *args):  # keep test output quiet
            pass

        def _send(self, code: int, body: dict) -> None:
            payload = json.dumps(body).encode()
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def do_GET(self):
            self._send(200, {"status": "ok", "served": state.cursor})

        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            self.rfile.read(length)
            reply = state.next_reply()
            if not reply:
                self._send(410, {"error": "replay transcript exhausted"})
                return
            self._send(
                200,
                {
                    "object": "chat.completion",
                    "choices": [
                        {
                            "index": 0,
                            "message": {"role": "assistant", "content": reply},
                            "finish_reason": "stop",
                        }
                    ],
                },
            )

    return Handler


class MockChatServer:
    """Serves canned Planner replies in order, one per POST."""

    def __init__(self, replies: list[str], port: int = 0):
        self.state = _ReplayState(replies)
        self.server = ThreadingHTTPServer(("127.0.0.1", port), _make_handler(self.state))
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @classmethod
    def from_file(cls, path: str | Path, port: int = 0) -> "MockChatServer":
        data = json.loads(Path(path).read_text())
        replies = data["replies"] if isinstance(data, dict) else list(data)
        return cls(replies, port)

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}/v1"

    def start(self) -> "MockChatServer":
        self.thread.start()
        return self

    def stop(self) -> None:
        self.server.shutdown()
        self.server.server_close()

    def __enter__(self) -> "MockChatServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
