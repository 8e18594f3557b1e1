"""Command-line entry points: index, ask, configure, run, chat, serve.

Guard failures print one "error: …" line and exit 2; agent sessions always
exit 0 and report their outcome status on a separate line when the session
did not complete normally.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .agent import ChatSession, SessionStatus, run_session
from .case import build_config_prompt, diff_case, flatten_case, load_case
from .config import AppConfig, ConfigError, load_config
from .index import (CorruptIndex, VersionMismatch, build_index, load_index,
                    prepare_document, save_index, scan_corpus)
from .llm import (HashEmbedder, HttpChatProvider, HttpEmbedder,
                  MockChatProvider, MockScript)
from .prompts import render_prompt_template
from .tools import (TOOL_RETRIEVE, TOOL_SCRIPT, TOOL_SHELL,
                    make_standard_registry)


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(2)


def _load_cfg(ctx) -> AppConfig:
    try:
        return load_config(ctx.obj.get("config_path"), {
            "approval": ctx.obj.get("approval"),
            "llm": ctx.obj.get("llm"),
        })
    except ConfigError as exc:
        _fail(str(exc))


def _make_provider(cfg: AppConfig):
    if cfg.llm:
        if not cfg.llm.startswith("mock:"):
            _fail(f"unsupported --llm value: {cfg.llm!r} (expected mock:PATH)")
        path = Path(cfg.llm[len("mock:"):])
        if not path.is_file():
            _fail(f"mock script not found: {path}")
        try:
            return MockChatProvider(MockScript.from_json_file(path))
        except (ValueError, KeyError) as exc:
            _fail(f"bad mock script {path}: {exc}")
    if not cfg.provider.base_url:
        _fail("no LLM configured: set FOAMPILOT_LLM_BASE_URL or pass --llm mock:PATH")
    return HttpChatProvider(cfg.provider)


def _make_embedder(cfg: AppConfig):
    if cfg.llm or not cfg.provider.base_url:
        return HashEmbedder()
    return HttpEmbedder(cfg.provider)


def _load_index_or_fail(path: Path):
    try:
        return load_index(path)
    except VersionMismatch as exc:
        _fail(f"index version mismatch: {exc}")
    except (CorruptIndex, OSError) as exc:
        _fail(f"cannot load index {path}: {exc}")


def _terminal_approver(request) -> bool:
    click.echo(f"[approval needed] {request.tool}: {request.rendered_input}")
    return click.confirm("approve?", default=False)


def _report_outcome(outcome) -> None:
    if outcome.status is not SessionStatus.COMPLETED:
        click.echo(f"[{outcome.status.value}]")
    click.echo(outcome.final_text)


@click.group()
@click.option("--config", "config_path", default=None,
              help="Path to a JSON config file (default: ./foampilot.json).")
@click.option("--approval", default=None,
              type=click.Choice(["interactive", "allowlist", "auto"]),
              help="Tool approval mode.")
@click.option("--llm", default=None, metavar="mock:PATH",
              help="Use a scripted mock provider instead of HTTP.")
@click.pass_context
def main(ctx, config_path, approval, llm):
    """Simulation-workflow agent for a fire-dynamics CFD solver."""
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    ctx.obj["approval"] = approval
    ctx.obj["llm"] = llm


@main.command("index")
@click.option("--src", "src", required=True, help="Root of the C++ source tree.")
@click.option("--out", "out", required=True, help="Output index file (.fpix).")
@click.pass_context
def cmd_index(ctx, src, out):
    """Scan, embed, and persist a code index."""
    cfg = _load_cfg(ctx)
    src_path = Path(src)
    if not src_path.is_dir():
        _fail(f"root not found: {src}")
    pairs = scan_corpus(src_path)
    if not pairs:
        _fail(f"no indexable sources under {src}")
    docs = [prepare_document(p, i) for i, p in enumerate(pairs)]
    idx = build_index(docs, _make_embedder(cfg))
    save_index(idx, out)
    truncated = sum(1 for ed in idx.docs
                    if ed.embedded_chars < len(ed.doc.full_text))
    click.echo(f"indexed {len(idx.docs)} documents, dimension {idx.dimension}")
    plural = "" if truncated == 1 else "s"
    click.echo(f"{truncated} document{plural} truncated for embedding")


@main.command("ask")
@click.argument("question")
@click.option("--index", "index_path", default=None,
              help="Index file to search (default from config).")
@click.pass_context
def cmd_ask(ctx, question, index_path):
    """Answer a question about the solver source code."""
    cfg = _load_cfg(ctx)
    path = Path(index_path or cfg.index_path)
    if not path.is_file():
        _fail(f"index not found: {path}")
    idx = _load_index_or_fail(path)
    provider = _make_provider(cfg)
    registry = make_standard_registry(
        workdir=Path.cwd(), approver=_terminal_approver,
        policy=cfg.approval_policy(), code_index=idx,
        embedder=_make_embedder(cfg), retrieve_k=cfg.retrieval_k,
        interpreter=cfg.script_interpreter,
        tool_names=(TOOL_SHELL, TOOL_RETRIEVE))
    outcome = run_session(question, provider, registry, cfg.policy)
    _report_outcome(outcome)


@main.command("configure")
@click.option("--case", "case_dir", required=True, help="Case directory to edit.")
@click.argument("request")
@click.pass_context
def cmd_configure(ctx, case_dir, request):
    """Apply a natural-language configuration change to a case."""
    cfg = _load_cfg(ctx)
    case_path = Path(case_dir)
    if not case_path.is_dir():
        _fail(f"case not found: {case_dir}")
    before = load_case(case_path)
    snapshot = flatten_case(case_path)
    prompt = build_config_prompt(str(case_path), request, snapshot)
    provider = _make_provider(cfg)
    tool_names = [TOOL_SHELL]
    idx = None
    if Path(cfg.index_path).is_file():
        idx = _load_index_or_fail(Path(cfg.index_path))
        tool_names.append(TOOL_RETRIEVE)
    registry = make_standard_registry(
        workdir=case_path, approver=_terminal_approver,
        policy=cfg.approval_policy(), code_index=idx,
        embedder=_make_embedder(cfg), retrieve_k=cfg.retrieval_k,
        interpreter=cfg.script_interpreter, tool_names=tuple(tool_names))
    outcome = run_session(prompt, provider, registry, cfg.policy)
    _report_outcome(outcome)
    after = load_case(case_path)
    for rel in sorted({d.rel_path for d in diff_case(before, after)}):
        click.echo(f"modified: {rel}")


@main.command("run")
@click.argument("mode", type=click.Choice(["serial", "hpc"]))
@click.option("--case", "case_dir", required=True, help="Case directory.")
@click.option("--bashrc", "bashrc", required=True,
              help="Path to the FOAM environment bashrc.")
@click.pass_context
def cmd_run(ctx, mode, case_dir, bashrc):
    """Mesh and run the case, serially or through the SLURM scheduler."""
    cfg = _load_cfg(ctx)
    case_path = Path(case_dir)
    if not case_path.is_dir():
        _fail(f"case not found: {case_dir}")
    if not Path(bashrc).is_file():
        _fail(f"bashrc not found: {bashrc}")
    if mode == "serial":
        prompt = render_prompt_template("SerialJob", {
            "case_path": str(case_path),
            "OF_bashrc_path": str(bashrc),
        })
    else:
        snapshot = flatten_case(case_path)
        prompt = render_prompt_template("HpcJob", {
            "case_path": str(case_path),
            "OF_bashrc_path": str(bashrc),
            "case_contents": snapshot.text,
        })
    provider = _make_provider(cfg)
    idx = None
    if Path(cfg.index_path).is_file():
        idx = _load_index_or_fail(Path(cfg.index_path))
    registry = make_standard_registry(
        workdir=case_path, approver=_terminal_approver,
        policy=cfg.approval_policy(), code_index=idx,
        embedder=_make_embedder(cfg), retrieve_k=cfg.retrieval_k,
        interpreter=cfg.script_interpreter)
    outcome = run_session(prompt, provider, registry, cfg.policy)
    _report_outcome(outcome)


@main.command("chat")
@click.pass_context
def cmd_chat(ctx):
    """Interactive terminal conversation with the agent."""
    cfg = _load_cfg(ctx)
    provider = _make_provider(cfg)
    idx = None
    if Path(cfg.index_path).is_file():
        idx = _load_index_or_fail(Path(cfg.index_path))
    registry = make_standard_registry(
        workdir=Path.cwd(), approver=_terminal_approver,
        policy=cfg.approval_policy(), code_index=idx,
        embedder=_make_embedder(cfg), retrieve_k=cfg.retrieval_k,
        interpreter=cfg.script_interpreter)
    session = ChatSession(provider, registry, cfg.policy)
    click.echo("chat started; empty line or 'exit' to quit")
    while True:
        try:
            line = click.prompt("you", prompt_suffix="> ", default="",
                                show_default=False)
        except (EOFError, click.Abort):
            break
        if not line.strip() or line.strip() in ("exit", "quit"):
            break
        outcome = session.send(line)
        _report_outcome(outcome)


@main.command("serve")
@click.option("--port", default=8787, show_default=True, type=int)
@click.option("--bind", default="127.0.0.1", show_default=True,
              help="Bind address; non-loopback exposes the shell tool, use with care.")
@click.pass_context
def cmd_serve(ctx, port, bind):
    """Serve the HTTP API and web console."""
    from .server import FoamPilotServer
    cfg = _load_cfg(ctx)
    if cfg.llm is None and not cfg.provider.base_url:
        _fail("no LLM configured: set FOAMPILOT_LLM_BASE_URL or pass --llm mock:PATH")
    server = FoamPilotServer(cfg, host=bind, port=port)
    click.echo(f"serving on http://{bind}:{server.port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()


if __name__ == "__main__":
    main(obj={})
