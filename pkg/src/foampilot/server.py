"""HTTP service for the web console: session creation, follow-up messages,
an SSE event stream per session, and approval resolution.

Built on the stdlib threading HTTP server: each agent session runs its own
worker thread and stays strictly sequential inside; approvals cross from an
HTTP handler into the waiting session through an exactly-once handoff.
"""

from __future__ import annotations

import json
import queue
import threading
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import unquote, urlsplit

from .agent import ChatSession
from .case import build_config_prompt, flatten_case
from .config import AppConfig
from .index import load_index
from .llm import (HashEmbedder, HttpChatProvider, HttpEmbedder,
                  MockChatProvider, MockScript)
from .prompts import render_prompt_template
from .tools import (TOOL_RETRIEVE, TOOL_SCRIPT, TOOL_SHELL,
                    ApprovalChannelClosed, make_standard_registry)

DEFAULT_PORT = 8787

# agent-core event types -> SSE event names
EVENT_TYPE_MAP = {
    "message_appended": "message",
    "tool_requested": "tool_request",
    "tool_result": "tool_result",
    "status_changed": "status",
}

MODES = ("chat", "configure", "run_serial", "run_hpc", "ask")

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
}

_FALLBACK_PAGE = (
    "<!doctype html><meta charset='utf-8'><title>foampilot</title>"
    "<p>Console assets are not built. The JSON API is at /api/sessions.</p>"
)


class _PendingApproval:
    def __init__(self):
        self.event = threading.Event()
        self.decision: str | None = None
        self.resolved = False


class _Session:
    def __init__(self, session_id: str, mode: str):
        self.id = session_id
        self.mode = mode
        self.events: list = []  # {"seq", "event", "data"}
        self.cond = threading.Condition()
        self.pending: dict = {}
        self.resolved_approvals: set = set()
        self.pending_lock = threading.Lock()
        self.queue: queue.Queue = queue.Queue()
        self.done = False
        self.error: str | None = None
        self.chat: ChatSession | None = None
        self.worker: threading.Thread | None = None
        self.last_outcome = None

    def push(self, event_name: str, data: dict) -> None:
        with self.cond:
            self.events.append({"seq": len(self.events) + 1,
                                "event": event_name, "data": data})
            self.cond.notify_all()

    def sink(self, agent_event) -> None:
        name = EVENT_TYPE_MAP.get(agent_event.type, agent_event.type)
        self.push(name, agent_event.data)

    def summary(self) -> dict:
        outcome = self.last_outcome
        status = "Running"
        if outcome is not None:
            status = outcome.status.value
        if self.error is not None:
            status = "Error"
        with self.pending_lock:
            pending = list(self.pending)
        return {
            "session_id": self.id,
            "mode": self.mode,
            "done": self.done,
            "status": status,
            "loop_count": outcome.loop_count if outcome else 0,
            "pending_approvals": pending,
            "event_count": len(self.events),
        }


class BadRequest(ValueError):
    pass


class FoamPilotServer:
    """Owns the HTTP listener, the session table, and worker lifecycles."""

    def __init__(self, config: AppConfig, host: str = "127.0.0.1",
                 port: int = DEFAULT_PORT, provider_factory=None,
                 embedder_factory=None, static_dir=None):
        self.config = config
        self.provider_factory = provider_factory
        self.embedder_factory = embedder_factory
        self.sessions: dict = {}
        self.sessions_lock = threading.Lock()
        self.shutting_down = threading.Event()
        self.static_dir = Path(static_dir) if static_dir \
            else Path(__file__).parent / "static"
        handler = _make_handler(self)
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self.host = host
        self.port = self.httpd.server_address[1]
        self._serve_thread: threading.Thread | None = None

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        """Serve in a background thread (used by tests and embedding)."""
        self._serve_thread = threading.Thread(
            target=self.httpd.serve_forever, kwargs={"poll_interval": 0.05},
            daemon=True)
        self._serve_thread.start()

    def serve_forever(self) -> None:
        self.httpd.serve_forever(poll_interval=0.1)

    def shutdown(self) -> None:
        """Stop accepting work, abort waiting approvals (sessions end as
        UserAborted), and wake idle workers."""
        self.shutting_down.set()
        with self.sessions_lock:
            sessions = list(self.sessions.values())
        for sess in sessions:
            sess.queue.put(None)
        self.httpd.shutdown()
        self.httpd.server_close()
        for sess in sessions:
            if sess.worker is not None:
                sess.worker.join(timeout=5)

    # -- providers ---------------------------------------------------------

    def _new_provider(self):
        if self.provider_factory is not None:
            return self.provider_factory()
        cfg = self.config
        if cfg.llm and cfg.llm.startswith("mock:"):
            # fresh replay state per session; scripts are stateful
            return MockChatProvider(
                MockScript.from_json_file(cfg.llm[len("mock:"):]))
        return HttpChatProvider(cfg.provider)

    def _new_embedder(self):
        if self.embedder_factory is not None:
            return self.embedder_factory()
        cfg = self.config
        if cfg.llm or not cfg.provider.base_url:
            return HashEmbedder()
        return HttpEmbedder(cfg.provider)

    # -- sessions ----------------------------------------------------------

    def _make_approver(self, sess: _Session):
        def approver(request) -> bool:
            entry = _PendingApproval()
            with sess.pending_lock:
                sess.pending[request.approval_id] = entry
            try:
                while not entry.event.wait(timeout=0.05):
                    if self.shutting_down.is_set():
                        raise ApprovalChannelClosed("server shutting down")
                return entry.decision == "approve"
            finally:
                with sess.pending_lock:
                    sess.pending.pop(request.approval_id, None)
        return approver

    def resolve_approval(self, sess: _Session, approval_id: str,
                         decision: str) -> int:
        """Returns an HTTP status: 200 resolved, 409 duplicate, 404 unknown."""
        with sess.pending_lock:
            entry = sess.pending.get(approval_id)
            if entry is None:
                return 409 if approval_id in sess.resolved_approvals else 404
            if entry.resolved:
                return 409
            entry.resolved = True
            entry.decision = decision
            sess.resolved_approvals.add(approval_id)
            entry.event.set()
            return 200

    def _initial_prompt(self, mode: str, params: dict) -> str | None:
        if mode == "chat":
            return None
        if mode == "ask":
            question = params.get("question", "")
            if not question:
                raise BadRequest("ask mode needs params.question")
            return question
        case = params.get("case", "")
        case_path = Path(case) if case else None
        if case_path is None or not case_path.is_dir():
            raise BadRequest(f"{mode} mode needs an existing params.case directory")
        if mode == "configure":
            request = params.get("request", "")
            if not request:
                raise BadRequest("configure mode needs params.request")
            return build_config_prompt(str(case_path), request,
                                       flatten_case(case_path))
        bashrc = params.get("bashrc", "")
        if not bashrc or not Path(bashrc).is_file():
            raise BadRequest(f"{mode} mode needs an existing params.bashrc file")
        if mode == "run_serial":
            return render_prompt_template("SerialJob", {
                "case_path": str(case_path), "OF_bashrc_path": bashrc})
        return render_prompt_template("HpcJob", {
            "case_path": str(case_path), "OF_bashrc_path": bashrc,
            "case_contents": flatten_case(case_path).text})

    def create_session(self, mode: str, params: dict) -> _Session:
        if self.shutting_down.is_set():
            raise BadRequest("server is shutting down")
        if mode not in MODES:
            raise BadRequest(f"unknown mode {mode!r}; expected one of {MODES}")
        params = params or {}
        initial_prompt = self._initial_prompt(mode, params)
        workdir = Path(params.get("case") or Path.cwd())
        sess = _Session(session_id=uuid.uuid4().hex[:12], mode=mode)

        cfg = self.config
        code_index = None
        if Path(cfg.index_path).is_file():
            code_index = load_index(cfg.index_path)
        tool_names = (TOOL_SHELL, TOOL_RETRIEVE) if mode == "ask" else \
            (TOOL_SHELL, TOOL_SCRIPT, TOOL_RETRIEVE)
        registry = make_standard_registry(
            workdir=workdir, approver=self._make_approver(sess),
            policy=cfg.approval_policy(), code_index=code_index,
            embedder=self._new_embedder(), retrieve_k=cfg.retrieval_k,
            interpreter=cfg.script_interpreter, tool_names=tool_names)
        sess.chat = ChatSession(self._new_provider(), registry, cfg.policy,
                                event_sink=sess.sink)
        sess.worker = threading.Thread(
            target=self._worker, args=(sess, initial_prompt), daemon=True)
        with self.sessions_lock:
            self.sessions[sess.id] = sess
        sess.worker.start()
        return sess

    def _worker(self, sess: _Session, initial_prompt: str | None) -> None:
        try:
            if initial_prompt is not None:
                sess.last_outcome = sess.chat.send(initial_prompt)
            while not self.shutting_down.is_set():
                msg = sess.queue.get()
                if msg is None:
                    break
                sess.last_outcome = sess.chat.send(msg)
        except Exception as exc:  # surface worker faults as a terminal event
            sess.error = f"{type(exc).__name__}: {exc}"
            sess.push("status", {"status": "Error", "detail": sess.error})
        finally:
            sess.done = True
            with sess.cond:
                sess.cond.notify_all()

    def get_session(self, session_id: str) -> _Session | None:
        with self.sessions_lock:
            return self.sessions.get(session_id)


def _make_handler(server: FoamPilotServer):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            pass  # keep request logs quiet; bodies may carry prompts

        # -- helpers -------------------------------------------------------

        def _send_json(self, code: int, obj: dict) -> None:
            body = json.dumps(obj).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _read_json(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            if length > 10 * 1024 * 1024:
                raise BadRequest("request body too large")
            raw = self.rfile.read(length) if length else b""
            if not raw:
                return {}
            try:
                obj = json.loads(raw.decode("utf-8"))
            except ValueError:
                raise BadRequest("request body is not valid JSON")
            if not isinstance(obj, dict):
                raise BadRequest("request body must be a JSON object")
            return obj

        def _session_or_404(self, session_id: str):
            sess = server.get_session(session_id)
            if sess is None:
                self._send_json(404, {"error": f"no session {session_id}"})
            return sess

        # -- GET -----------------------------------------------------------

        def do_GET(self):
            path = urlsplit(self.path).path
            parts = [unquote(p) for p in path.strip("/").split("/") if p]
            try:
                if parts[:2] == ["api", "sessions"]:
                    if len(parts) == 3:
                        sess = self._session_or_404(parts[2])
                        if sess is not None:
                            self._send_json(200, sess.summary())
                        return
                    if len(parts) == 4 and parts[3] == "events":
                        sess = self._session_or_404(parts[2])
                        if sess is not None:
                            self._stream_events(sess)
                        return
                    self._send_json(404, {"error": "not found"})
                    return
                self._serve_static(path)
            except (BrokenPipeError, ConnectionResetError):
                pass

        def _serve_static(self, path: str) -> None:
            rel = path.lstrip("/") or "index.html"
            base = server.static_dir.resolve()
            target = (base / rel).resolve()
            if not str(target).startswith(str(base)) or not target.is_file():
                if rel == "index.html":
                    body = _FALLBACK_PAGE.encode("utf-8")
                    self.send_response(200)
                    self.send_header("Content-Type", "text/html; charset=utf-8")
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                    return
                self._send_json(404, {"error": "not found"})
                return
            body = target.read_bytes()
            ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _stream_events(self, sess: _Session) -> None:
            query = urlsplit(self.path).query
            last = 0
            header_id = self.headers.get("Last-Event-ID")
            if header_id and header_id.isdigit():
                last = int(header_id)
            elif query:
                for piece in query.split("&"):
                    if piece.startswith("last_event_id="):
                        value = piece.split("=", 1)[1]
                        if value.isdigit():
                            last = int(value)
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Connection", "close")
            self.end_headers()
            idle_rounds = 0
            while True:
                with sess.cond:
                    if len(sess.events) <= last:
                        sess.cond.wait(timeout=0.25)
                    batch = [e for e in sess.events if e["seq"] > last]
                if not batch:
                    if server.shutting_down.is_set():
                        return
                    idle_rounds += 1
                    if idle_rounds % 40 == 0:
                        self.wfile.write(b": keep-alive\n\n")
                        self.wfile.flush()
                    continue
                idle_rounds = 0
                for ev in batch:
                    frame = (f"id: {ev['seq']}\n"
                             f"event: {ev['event']}\n"
                             f"data: {json.dumps(ev['data'])}\n\n")
                    self.wfile.write(frame.encode("utf-8"))
                    last = ev["seq"]
                self.wfile.flush()

        # -- POST ----------------------------------------------------------

        def do_POST(self):
            path = urlsplit(self.path).path
            parts = [unquote(p) for p in path.strip("/").split("/") if p]
            try:
                body = self._read_json()
                if parts == ["api", "sessions"]:
                    sess = server.create_session(body.get("mode", ""),
                                                 body.get("params") or {})
                    self._send_json(200, {"session_id": sess.id})
                    return
                if len(parts) == 4 and parts[:2] == ["api", "sessions"] \
                        and parts[3] == "messages":
                    sess = self._session_or_404(parts[2])
                    if sess is None:
                        return
                    text = body.get("text", "")
                    if not isinstance(text, str) or not text:
                        raise BadRequest("messages need a non-empty text field")
                    sess.queue.put(text)
                    self._send_json(202, {"accepted": True})
                    return
                if len(parts) == 5 and parts[:2] == ["api", "sessions"] \
                        and parts[3] == "approvals":
                    sess = self._session_or_404(parts[2])
                    if sess is None:
                        return
                    decision = body.get("decision", "")
                    if decision not in ("approve", "deny"):
                        raise BadRequest('decision must be "approve" or "deny"')
                    code = server.resolve_approval(sess, parts[4], decision)
                    if code == 200:
                        self._send_json(200, {"resolved": True})
                    elif code == 409:
                        self._send_json(409, {"error": "approval already resolved"})
                    else:
                        self._send_json(404, {"error": "no such approval"})
                    return
                self._send_json(404, {"error": "not found"})
            except BadRequest as exc:
                self._send_json(400, {"error": str(exc)})
            except (BrokenPipeError, ConnectionResetError):
                pass

    return Handler
