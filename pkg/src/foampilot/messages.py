"""Conversation state: roles, messages, and the running transcript.

Token counts are estimated, not tokenized: the estimate only guards the
context-window budget, so a cheap deterministic heuristic is enough. A
provider-exact tokenizer can replace :func:`estimate_tokens` without touching
any interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"
    TOOL_OBSERVATION = "tool_observation"


def estimate_tokens(text: str) -> int:
    """Estimate the token count of ``text`` as ceil(utf8_bytes / 4).

    Deterministic and monotone non-decreasing in input length; within-rounding
    subadditive: estimate(a+b) <= estimate(a) + estimate(b) + 1.
    """
    if not text:
        return 0
    return math.ceil(len(text.encode("utf-8")) / 4)


@dataclass(frozen=True)
class Message:
    role: Role
    content: str
    token_estimate: int = field(default=-1)

    def __post_init__(self):
        if self.token_estimate < 0:
            object.__setattr__(self, "token_estimate", estimate_tokens(self.content))


@dataclass
class Transcript:
    """Ordered message list with running token accounting."""

    messages: list[Message] = field(default_factory=list)
    total_token_estimate: int = 0

    def append(self, role: Role, content: str) -> Message:
        msg = Message(role, content)
        self.messages.append(msg)
        self.total_token_estimate += msg.token_estimate
        return msg

    def __len__(self) -> int:
        return len(self.messages)

    def count_role(self, role: Role) -> int:
        return sum(1 for m in self.messages if m.role is role)

    def last_of_role(self, role: Role) -> Message | None:
        for m in reversed(self.messages):
            if m.role is role:
                return m
        return None
