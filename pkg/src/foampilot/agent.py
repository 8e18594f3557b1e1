"""The LLM-tool loop: assemble the transcript, parse each assistant reply
into an action, route tool calls through the registry, and decide when the
session is over.

Termination is total by construction: a final answer completes the session;
repeated malformed replies or a dead provider give up; a tool-dispatch cap
and a token budget bound runaway sessions; a closed approval channel aborts.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum

from .llm import ProviderError
from .messages import Message, Role, Transcript, estimate_tokens
from .prompts import MALFORMED_ACTION_OBSERVATION, SUMMARIZE_INSTRUCTION, \
    render_system_prompt
from .tools import ApprovalChannelClosed, ToolRegistry, new_approval_id

DEFAULT_MAX_LOOPS = 25
DEFAULT_MAX_PARSE_RETRIES = 3
DEFAULT_CONTEXT_WINDOW = 128000
DEFAULT_BUDGET_FRACTION = 0.8

FINAL_ANSWER = "Final Answer"


class ActionKind(Enum):
    TOOL_CALL = "tool_call"
    FINAL_ANSWER = "final_answer"
    MALFORMED = "malformed"


class SessionStatus(str, Enum):
    COMPLETED = "Completed"
    GAVE_UP = "GaveUp"
    MAX_LOOPS_REACHED = "MaxLoopsReached"
    BUDGET_EXCEEDED = "BudgetExceeded"
    USER_ABORTED = "UserAborted"


@dataclass(frozen=True)
class AgentAction:
    kind: ActionKind
    tool_name: str | None = None
    tool_input: object = None
    answer: str | None = None
    raw: str = ""


@dataclass
class SessionPolicy:
    max_loops: int = DEFAULT_MAX_LOOPS
    max_parse_retries: int = DEFAULT_MAX_PARSE_RETRIES
    context_window: int = DEFAULT_CONTEXT_WINDOW
    budget_fraction: float = DEFAULT_BUDGET_FRACTION

    def __post_init__(self):
        if self.max_loops < 1:
            raise ValueError("max_loops must be >= 1")
        if self.max_parse_retries < 1:
            raise ValueError("max_parse_retries must be >= 1")
        if self.context_window < 1024:
            raise ValueError("context_window must be >= 1024")
        if not 0 < self.budget_fraction <= 1:
            raise ValueError("budget_fraction must be in (0, 1]")

    @property
    def token_budget(self) -> float:
        return self.budget_fraction * self.context_window


@dataclass
class LoopOutcome:
    status: SessionStatus
    final_text: str
    loop_count: int
    transcript: Transcript


@dataclass(frozen=True)
class AgentEvent:
    type: str  # message_appended | tool_requested | tool_result | status_changed
    data: dict


_FENCE_RE = re.compile(r"```[a-zA-Z]*\n?(.*?)```", re.DOTALL)


def _json_candidates(text: str):
    decoder = json.JSONDecoder()
    pos = 0
    while True:
        brace = text.find("{", pos)
        if brace == -1:
            return
        try:
            obj, end = decoder.raw_decode(text, brace)
        except ValueError:
            pos = brace + 1
            continue
        if isinstance(obj, dict) and "action" in obj:
            yield obj
            pos = brace + end if end <= brace else end
        else:
            pos = brace + 1


def _coerce_input_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return json.dumps(value)


def parse_action(assistant_text: str) -> AgentAction:
    """Total parse of an assistant reply: the LAST fenced JSON blob with an
    "action" key wins, falling back to the last bare JSON object anywhere.
    Anything unusable is Malformed, never an exception."""
    text = assistant_text or ""
    chosen = None
    for block in _FENCE_RE.findall(text):
        for obj in _json_candidates(block):
            chosen = obj
    if chosen is None:
        for obj in _json_candidates(text):
            chosen = obj
    if chosen is None:
        return AgentAction(kind=ActionKind.MALFORMED, raw=text)
    action = chosen.get("action")
    if not isinstance(action, str) or not action:
        return AgentAction(kind=ActionKind.MALFORMED, raw=text)
    if action == FINAL_ANSWER:
        answer = _coerce_input_text(chosen.get("action_input"))
        if not answer:
            return AgentAction(kind=ActionKind.MALFORMED, raw=text)
        return AgentAction(kind=ActionKind.FINAL_ANSWER, answer=answer, raw=text)
    return AgentAction(kind=ActionKind.TOOL_CALL, tool_name=action,
                       tool_input=chosen.get("action_input"), raw=text)


def _fallback_summary(transcript: Transcript) -> str:
    loops = transcript.count_role(Role.TOOL_OBSERVATION)
    parts = [f"Session made {loops} tool calls over "
             f"{len(transcript)} messages."]
    last_obs = transcript.last_of_role(Role.TOOL_OBSERVATION)
    if last_obs is not None:
        excerpt = last_obs.content[:400]
        parts.append(f"Last observation: {excerpt}")
    return " ".join(parts)


def summarize_transcript(transcript: Transcript, llm,
                         context_window: int = DEFAULT_CONTEXT_WINDOW,
                         budget_fraction: float = DEFAULT_BUDGET_FRACTION) -> str:
    """One-shot summary of a session for the user. Takes the newest tail of
    the transcript that fits the token budget; if the provider fails, falls
    back to a deterministic role-count summary."""
    if not transcript.messages:
        raise ValueError("transcript must be non-empty")
    budget = int(budget_fraction * context_window)
    instruction = Message(Role.SYSTEM, SUMMARIZE_INSTRUCTION)
    remaining = budget - instruction.token_estimate
    tail: list = []
    used = 0
    for msg in reversed(transcript.messages):
        line = f"{msg.role.value}: {msg.content}"
        cost = estimate_tokens(line) + 1
        if used + cost > remaining and tail:
            break
        if used + cost > remaining:
            line = line[:max(4 * max(remaining - used - 1, 1), 16)]
            tail.append(line)
            break
        tail.append(line)
        used += cost
    flattened = "\n".join(reversed(tail))
    try:
        return llm.complete([instruction, Message(Role.USER, flattened)]).text
    except ProviderError:
        return _fallback_summary(transcript)


class _Emitter:
    def __init__(self, event_sink):
        self.sink = event_sink

    def __call__(self, event_type: str, **data):
        if self.sink is not None:
            self.sink(AgentEvent(type=event_type, data=data))


def _append(transcript: Transcript, emit: _Emitter, role: Role, content: str):
    msg = transcript.append(role, content)
    emit("message_appended", role=role.value, content=content)
    return msg


def _drive_loop(transcript: Transcript, llm, tools: ToolRegistry,
                policy: SessionPolicy, emit: _Emitter) -> LoopOutcome:
    loop_count = 0
    consecutive_malformed = 0

    def finish(status: SessionStatus, final_text: str) -> LoopOutcome:
        emit("status_changed", status=status.value)
        return LoopOutcome(status=status, final_text=final_text,
                           loop_count=loop_count, transcript=transcript)

    while True:
        if transcript.total_token_estimate > policy.token_budget:
            summary = summarize_transcript(
                transcript, llm, policy.context_window, policy.budget_fraction)
            return finish(SessionStatus.BUDGET_EXCEEDED, summary)
        try:
            response = llm.complete(transcript.messages)
        except ProviderError as exc:
            summary = f"Provider failure: {exc}. {_fallback_summary(transcript)}"
            return finish(SessionStatus.GAVE_UP, summary)
        _append(transcript, emit, Role.ASSISTANT, response.text)
        action = parse_action(response.text)

        if action.kind is ActionKind.FINAL_ANSWER:
            return finish(SessionStatus.COMPLETED, action.answer)

        if action.kind is ActionKind.MALFORMED:
            consecutive_malformed += 1
            if consecutive_malformed >= policy.max_parse_retries:
                summary = (f"Gave up after {consecutive_malformed} consecutive "
                           f"malformed replies. {_fallback_summary(transcript)}")
                return finish(SessionStatus.GAVE_UP, summary)
            _append(transcript, emit, Role.USER, MALFORMED_ACTION_OBSERVATION)
            continue

        consecutive_malformed = 0
        approval_id = new_approval_id()
        rendered = _coerce_input_text(action.tool_input)
        emit("tool_requested", approval_id=approval_id,
             tool=action.tool_name, input=rendered)
        try:
            result = tools.dispatch(action.tool_name, action.tool_input,
                                    approval_id=approval_id)
        except ApprovalChannelClosed:
            summary = f"Aborted by user. {_fallback_summary(transcript)}"
            return finish(SessionStatus.USER_ABORTED, summary)
        loop_count += 1
        emit("tool_result", tool=action.tool_name, ok=result.ok,
             output=result.output, exit_code=result.exit_code,
             truncated=result.truncated)
        _append(transcript, emit, Role.TOOL_OBSERVATION, result.output)
        if loop_count >= policy.max_loops:
            summary = (f"Stopped after reaching the tool-call limit of "
                       f"{policy.max_loops}. {_fallback_summary(transcript)}")
            return finish(SessionStatus.MAX_LOOPS_REACHED, summary)


def run_session(initial_user_prompt: str, llm, tools: ToolRegistry,
                policy: SessionPolicy | None = None, approver=None,
                event_sink=None, system_prompt: str | None = None) -> LoopOutcome:
    """Run one agent session to termination.

    The approver parameter is accepted for symmetry with the tool layer:
    registries built by make_standard_registry already carry their approver,
    so passing one here is only needed for custom registries (it is ignored
    otherwise).
    """
    del approver  # gating lives in the tool registry's closures
    if not tools.names():
        raise ValueError("tool registry must be non-empty")
    policy = policy or SessionPolicy()
    emit = _Emitter(event_sink)
    transcript = Transcript()
    _append(transcript, emit, Role.SYSTEM,
            system_prompt or render_system_prompt(tools.names()))
    _append(transcript, emit, Role.USER, initial_user_prompt)
    return _drive_loop(transcript, llm, tools, policy, emit)


class ChatSession:
    """A persistent conversation: each send() appends the user text to the
    running transcript and drives the loop until that turn terminates."""

    def __init__(self, llm, tools: ToolRegistry, policy: SessionPolicy | None = None,
                 event_sink=None, system_prompt: str | None = None):
        if not tools.names():
            raise ValueError("tool registry must be non-empty")
        self.llm = llm
        self.tools = tools
        self.policy = policy or SessionPolicy()
        self._emit = _Emitter(event_sink)
        self.transcript = Transcript()
        self.outcomes: list = []
        _append(self.transcript, self._emit, Role.SYSTEM,
                system_prompt or render_system_prompt(tools.names()))

    def send(self, user_text: str) -> LoopOutcome:
        _append(self.transcript, self._emit, Role.USER, user_text)
        outcome = _drive_loop(self.transcript, self.llm, self.tools,
                              self.policy, self._emit)
        self.outcomes.append(outcome)
        return outcome
