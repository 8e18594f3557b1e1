"""Layered application configuration: built-in defaults, then a JSON config
file, then environment variables, then command-line flags. Later layers win
per key.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .agent import SessionPolicy
from .llm import DEFAULT_CHAT_MODEL, DEFAULT_EMBED_MODEL, ProviderConfig
from .tools import ApprovalMode, ApprovalPolicy

CONFIG_FILENAME = "foampilot.json"

ENV_MAP = {
    "FOAMPILOT_LLM_BASE_URL": "base_url",
    "FOAMPILOT_LLM_API_KEY": "api_key",
    "FOAMPILOT_LLM_MODEL": "chat_model",
    "FOAMPILOT_EMBED_MODEL": "embed_model",
    "FOAMPILOT_TEMPERATURE": "temperature",
    "FOAMPILOT_SCRIPT_INTERPRETER": "script_interpreter",
}

_DEFAULTS = {
    "base_url": "",
    "api_key": "",
    "chat_model": DEFAULT_CHAT_MODEL,
    "embed_model": DEFAULT_EMBED_MODEL,
    "temperature": 0.0,
    "request_timeout": 120.0,
    "max_retries": 2,
    "max_loops": 25,
    "max_parse_retries": 3,
    "context_window": 128000,
    "budget_fraction": 0.8,
    "retrieval_k": 4,
    "cells_per_core": 50000,
    "index_path": "code.fpix",
    "allowlist_patterns": [],
    "approval": "interactive",
    "script_interpreter": None,
    "llm": None,  # None = HTTP provider; "mock:PATH" = scripted provider
}

_FLOAT_KEYS = {"temperature", "request_timeout", "budget_fraction"}
_INT_KEYS = {"max_retries", "max_loops", "max_parse_retries", "context_window",
             "retrieval_k", "cells_per_core"}


class ConfigError(ValueError):
    pass


@dataclass
class AppConfig:
    provider: ProviderConfig
    policy: SessionPolicy
    retrieval_k: int = 4
    cells_per_core: int = 50000
    index_path: str = "code.fpix"
    allowlist_patterns: list = field(default_factory=list)
    approval: ApprovalMode = ApprovalMode.INTERACTIVE
    script_interpreter: str | None = None
    llm: str | None = None

    def approval_policy(self) -> ApprovalPolicy:
        return ApprovalPolicy(mode=self.approval,
                              allow_patterns=list(self.allowlist_patterns))


def _coerce(key: str, value):
    if value is None:
        return None
    try:
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _INT_KEYS:
            return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key!r} has non-numeric value {value!r}")
    return value


def _find_config_file(cwd: Path) -> Path | None:
    for candidate in (cwd / CONFIG_FILENAME, Path.home() / CONFIG_FILENAME):
        if candidate.is_file():
            return candidate
    return None


def load_config(config_path: str | None = None, cli_overrides: dict | None = None,
                env: dict | None = None, cwd: str | Path | None = None) -> AppConfig:
    """Resolve the effective configuration. Precedence per key:
    flag > environment variable > config file > built-in default."""
    env = os.environ if env is None else env
    cwd = Path(cwd) if cwd is not None else Path.cwd()
    merged = dict(_DEFAULTS)

    if config_path is not None:
        file_path = Path(config_path)
        if not file_path.is_file():
            raise ConfigError(f"config file not found: {file_path}")
    else:
        file_path = _find_config_file(cwd)
    if file_path is not None:
        try:
            data = json.loads(file_path.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise ConfigError(f"config file {file_path} is not valid JSON: {exc}")
        if not isinstance(data, dict):
            raise ConfigError(f"config file {file_path} must hold a JSON object")
        for key, value in data.items():
            if key in merged:
                merged[key] = _coerce(key, value)

    for env_name, key in ENV_MAP.items():
        if env_name in env:
            merged[key] = _coerce(key, env[env_name])

    for key, value in (cli_overrides or {}).items():
        if value is not None and key in merged:
            merged[key] = _coerce(key, value)

    try:
        approval = ApprovalMode(merged["approval"])
    except ValueError:
        raise ConfigError(f"unknown approval mode: {merged['approval']!r}")

    provider = ProviderConfig(
        base_url=merged["base_url"],
        api_key=merged["api_key"],
        chat_model=merged["chat_model"],
        embed_model=merged["embed_model"],
        temperature=merged["temperature"],
        request_timeout=merged["request_timeout"],
        max_retries=merged["max_retries"],
    )
    policy = SessionPolicy(
        max_loops=merged["max_loops"],
        max_parse_retries=merged["max_parse_retries"],
        context_window=merged["context_window"],
        budget_fraction=merged["budget_fraction"],
    )
    patterns = merged["allowlist_patterns"]
    if isinstance(patterns, str):
        patterns = [patterns]
    return AppConfig(
        provider=provider,
        policy=policy,
        retrieval_k=merged["retrieval_k"],
        cells_per_core=merged["cells_per_core"],
        index_path=str(merged["index_path"]),
        allowlist_patterns=list(patterns),
        approval=approval,
        script_interpreter=merged["script_interpreter"],
        llm=merged["llm"],
    )
