"""Session tools: approval-gated shell, script interpreter, and retrieval,
behind a uniform registry so the agent loop dispatches by name only.

Every process creation goes through run_process; tests replace it to prove
nothing spawns before an approval resolves.
"""

from __future__ import annotations

import os
import re
import shutil
import subprocess
import tempfile
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from . import index as index_mod
from .index import EmbedderError

SHELL_HEAD_LIMIT = 2048
SHELL_TAIL_LIMIT = 6144
RETRIEVE_HEAD_LIMIT = 49152
RETRIEVE_TAIL_LIMIT = 16384
DEFAULT_SHELL_TIMEOUT = 600.0
DEFAULT_SCRIPT_TIMEOUT = 300.0
DEFAULT_RETRIEVE_K = 4
DENIED_OUTPUT = "Command denied by user."

TOOL_SHELL = "shell"
TOOL_SCRIPT = "script"
TOOL_RETRIEVE = "retrieve"


class WorkdirMissing(FileNotFoundError):
    pass


class InterpreterMissing(FileNotFoundError):
    pass


class ApprovalChannelClosed(RuntimeError):
    pass


class IndexNotLoaded(RuntimeError):
    pass


class ApprovalMode(str, Enum):
    INTERACTIVE = "interactive"
    ALLOWLIST = "allowlist"
    AUTO = "auto"


@dataclass
class ApprovalPolicy:
    mode: ApprovalMode = ApprovalMode.INTERACTIVE
    # regex patterns auto-approved in ALLOWLIST mode (fullmatch semantics)
    allow_patterns: list = field(default_factory=list)


@dataclass(frozen=True)
class ApprovalRequest:
    approval_id: str
    tool: str
    rendered_input: str


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    input_schema_hint: str


@dataclass(frozen=True)
class ToolResult:
    ok: bool
    output: str
    exit_code: int | None = None
    duration: float = 0.0
    truncated: bool = False


def run_process(command, cwd, timeout, shell: bool = True):
    """Single process-spawn seam. Shell commands run under bash so `source`
    works; scripts run as an argv list."""
    return subprocess.run(
        command,
        shell=shell,
        cwd=str(cwd),
        timeout=timeout,
        executable="/bin/bash" if shell else None,
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
        text=True,
        errors="replace",
    )


_ELIDED_RE_CACHE: dict = {}


def truncate_output(text: str, head_limit: int = SHELL_HEAD_LIMIT,
                    tail_limit: int = SHELL_TAIL_LIMIT):
    """Keep the first head_limit and last tail_limit chars around an elision
    marker. Re-truncating already-truncated text is a no-op (the exact
    truncated shape is recognized and returned unchanged)."""
    if head_limit < 0 or tail_limit < 0:
        raise ValueError("limits must be >= 0")
    if len(text) <= head_limit + tail_limit:
        return text, False
    key = (head_limit, tail_limit)
    pat = _ELIDED_RE_CACHE.get(key)
    if pat is None:
        pat = re.compile(
            r"(?s)\A.{%d}\n…\[\d+ chars elided\]…\n.{%d}\Z"
            % (head_limit, tail_limit))
        _ELIDED_RE_CACHE[key] = pat
    if pat.match(text):
        return text, True
    elided = len(text) - head_limit - tail_limit
    head = text[:head_limit]
    tail = text[len(text) - tail_limit:] if tail_limit else ""
    return f"{head}\n…[{elided} chars elided]…\n{tail}", True


def new_approval_id() -> str:
    return f"appr-{uuid.uuid4().hex[:12]}"


def _resolve_gate(policy, approver, tool: str, rendered_input: str,
                  approval_id: str | None = None) -> bool:
    """True = approved. Raises ApprovalChannelClosed when an answer is needed
    but no channel can provide one."""
    if isinstance(policy, ApprovalMode):
        policy = ApprovalPolicy(mode=policy)
    if policy.mode is ApprovalMode.AUTO:
        return True
    if policy.mode is ApprovalMode.ALLOWLIST:
        for pattern in policy.allow_patterns:
            if re.fullmatch(pattern, rendered_input):
                return True
    if approver is None:
        raise ApprovalChannelClosed(f"no approver attached for tool {tool!r}")
    request = ApprovalRequest(approval_id=approval_id or new_approval_id(),
                              tool=tool, rendered_input=rendered_input)
    decision = approver(request)
    return bool(decision)


def _denied_result(started: float) -> ToolResult:
    return ToolResult(ok=False, output=DENIED_OUTPUT, exit_code=None,
                      duration=time.monotonic() - started, truncated=False)


def run_shell(command: str, workdir, timeout: float = DEFAULT_SHELL_TIMEOUT,
              approver=None, mode=ApprovalMode.INTERACTIVE,
              approval_id: str | None = None) -> ToolResult:
    """Run a shell command in workdir with the approval gate in front.
    Denial is an ordinary failed result, not an exception, so the agent can
    adapt to it."""
    started = time.monotonic()
    workdir = Path(workdir)
    if not workdir.is_dir():
        raise WorkdirMissing(str(workdir))
    if not _resolve_gate(mode, approver, TOOL_SHELL, command, approval_id):
        return _denied_result(started)
    try:
        proc = run_process(command, cwd=workdir, timeout=timeout, shell=True)
    except subprocess.TimeoutExpired as exc:
        partial = exc.stdout or ""
        if isinstance(partial, bytes):
            partial = partial.decode("utf-8", errors="replace")
        output = (partial + "\n" if partial else "") + f"timed out after {timeout:g}s"
        output, truncated = truncate_output(output)
        return ToolResult(ok=False, output=output, exit_code=None,
                          duration=time.monotonic() - started, truncated=truncated)
    output, truncated = truncate_output(proc.stdout or "")
    return ToolResult(ok=proc.returncode == 0, output=output,
                      exit_code=proc.returncode,
                      duration=time.monotonic() - started, truncated=truncated)


def run_script(source: str, workdir, timeout: float = DEFAULT_SCRIPT_TIMEOUT,
               approver=None, mode=ApprovalMode.INTERACTIVE,
               interpreter: str | None = None,
               scratch_dir=None, approval_id: str | None = None) -> ToolResult:
    """Write source to a temp file and run it with the configured external
    interpreter; approval/timeout/truncation match run_shell."""
    started = time.monotonic()
    if not source:
        raise ValueError("script source must be non-empty")
    workdir = Path(workdir)
    if not workdir.is_dir():
        raise WorkdirMissing(str(workdir))
    if not _resolve_gate(mode, approver, TOOL_SCRIPT, source, approval_id):
        return _denied_result(started)
    interp = interpreter or os.environ.get("FOAMPILOT_SCRIPT_INTERPRETER", "python3")
    interp_path = shutil.which(interp)
    if interp_path is None:
        raise InterpreterMissing(interp)
    fd, tmp_path = tempfile.mkstemp(
        suffix=".py", prefix="tool-script-",
        dir=str(scratch_dir) if scratch_dir else None)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(source)
        try:
            proc = run_process([interp_path, tmp_path], cwd=workdir,
                               timeout=timeout, shell=False)
        except subprocess.TimeoutExpired:
            return ToolResult(ok=False, output=f"timed out after {timeout:g}s",
                              exit_code=None,
                              duration=time.monotonic() - started, truncated=False)
        output, truncated = truncate_output(proc.stdout or "")
        return ToolResult(ok=proc.returncode == 0, output=output,
                          exit_code=proc.returncode,
                          duration=time.monotonic() - started, truncated=truncated)
    finally:
        try:
            os.unlink(tmp_path)
        except OSError:
            pass


def retrieve(query: str, k: int = DEFAULT_RETRIEVE_K, index=None,
             embedder=None) -> ToolResult:
    """Embed the query, search the code index, and format the hits: a
    header listing the candidate paths, then each document in full."""
    started = time.monotonic()
    if index is None or not index.docs:
        raise IndexNotLoaded("no code index loaded")
    if k < 1:
        raise ValueError("k must be >= 1")
    if embedder is None:
        raise EmbedderError("no embedder configured")
    try:
        qvec = embedder.embed([query])[0]
    except (ValueError, RuntimeError) as exc:
        raise EmbedderError(str(exc)) from exc
    hits = index_mod.search(index, qvec, k)
    paths = [doc.rel_path for doc, _ in hits]
    body = "\n".join(doc.full_text.rstrip("\n") + "\n" for doc, _ in hits)
    text = "**Possible File Locations:**\n" + repr(paths) + "\n\n" + body
    output, truncated = truncate_output(text, RETRIEVE_HEAD_LIMIT,
                                        RETRIEVE_TAIL_LIMIT)
    return ToolResult(ok=True, output=output, exit_code=None,
                      duration=time.monotonic() - started, truncated=truncated)


class ToolRegistry:
    """Name-keyed tool dispatch. Unknown names come back as an observation
    (the loop keeps going), not an exception."""

    def __init__(self):
        self._tools: dict = {}

    def register(self, spec: ToolSpec, fn) -> None:
        if spec.name in self._tools:
            raise ValueError(f"tool {spec.name!r} already registered")
        self._tools[spec.name] = (spec, fn)

    def names(self) -> list:
        return list(self._tools)

    def specs(self) -> list:
        return [spec for spec, _ in self._tools.values()]

    def dispatch(self, name: str, action_input,
                 approval_id: str | None = None) -> ToolResult:
        entry = self._tools.get(name)
        if entry is None:
            available = ", ".join(self._tools)
            return ToolResult(ok=False,
                              output=f"Unknown tool: {name}. Available: {available}")
        _, fn = entry
        try:
            return fn(action_input, approval_id)
        except ApprovalChannelClosed:
            raise  # the session must see this and abort
        except Exception as exc:  # tool faults become observations, not crashes
            return ToolResult(ok=False,
                              output=f"Tool error: {type(exc).__name__}: {exc}")


def _coerce_text(action_input, *keys) -> str:
    if isinstance(action_input, dict):
        for key in keys:
            if key in action_input:
                return str(action_input[key])
        return str(action_input)
    return str(action_input)


def make_standard_registry(workdir, approver=None,
                           policy: ApprovalPolicy | ApprovalMode = ApprovalMode.INTERACTIVE,
                           code_index=None, embedder=None,
                           shell_timeout: float = DEFAULT_SHELL_TIMEOUT,
                           script_timeout: float = DEFAULT_SCRIPT_TIMEOUT,
                           retrieve_k: int = DEFAULT_RETRIEVE_K,
                           interpreter: str | None = None,
                           scratch_dir=None,
                           tool_names=(TOOL_SHELL, TOOL_SCRIPT, TOOL_RETRIEVE)
                           ) -> ToolRegistry:
    """The standard tool registry; tool_names selects a subset for session
    kinds that do not expose all three tools."""
    registry = ToolRegistry()
    if TOOL_SHELL in tool_names:
        registry.register(
            ToolSpec(TOOL_SHELL, "Execute a Linux shell command in the case workdir.",
                     "string: the command line"),
            lambda action_input, approval_id=None: run_shell(
                _coerce_text(action_input, "command", "cmd"), workdir,
                timeout=shell_timeout, approver=approver, mode=policy,
                approval_id=approval_id))
    if TOOL_SCRIPT in tool_names:
        registry.register(
            ToolSpec(TOOL_SCRIPT, "Run a Python script with the external interpreter.",
                     "string: the script source"),
            lambda action_input, approval_id=None: run_script(
                _coerce_text(action_input, "source", "code", "script"), workdir,
                timeout=script_timeout, approver=approver, mode=policy,
                interpreter=interpreter, scratch_dir=scratch_dir,
                approval_id=approval_id))

    def _retrieve(action_input, approval_id=None):
        k = retrieve_k
        if isinstance(action_input, dict) and "k" in action_input:
            try:
                k = int(action_input["k"])
            except (TypeError, ValueError):
                k = retrieve_k
        return retrieve(_coerce_text(action_input, "query", "q"), k=k,
                        index=code_index, embedder=embedder)

    if TOOL_RETRIEVE in tool_names:
        registry.register(
            ToolSpec(TOOL_RETRIEVE, "Search the indexed solver source code.",
                     "string: a natural-language query"),
            _retrieve)
    return registry
