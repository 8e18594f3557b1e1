"""Case-directory handling: load a case tree, flatten it to a single prompt
string, build the configuration request prompt, and diff two case states.

Flattening mirrors what a scientist would paste into a chat: every
configuration file under a delimiter header, with boilerplate banners and
FoamFile metadata stripped, binary and generated files skipped.
"""

from __future__ import annotations

import difflib
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import foamdict
from .foamdict import FoamDict, FoamList, FoamNode, parse_dict, serialize_dict
from .messages import estimate_tokens
from .prompts import render_prompt_template

SNAPSHOT_DELIMITER = "==== file: {rel_path} ===="

_VCS_DIRS = {".git", ".svn", ".hg"}


class RootMissing(FileNotFoundError):
    pass


@dataclass
class CaseFile:
    rel_path: str
    raw: str = ""
    parsed: FoamNode | None = None
    skipped: bool = False
    skip_reason: str | None = None


@dataclass
class CaseTree:
    root: Path
    files: dict = field(default_factory=dict)  # rel_path -> CaseFile, sorted


@dataclass(frozen=True)
class CaseSnapshot:
    text: str
    file_count: int
    token_estimate: int


@dataclass(frozen=True)
class CaseDiff:
    rel_path: str
    keypath: str | None
    old: str | None  # None means absent (file or node added)
    new: str | None  # None means absent (file or node removed)


def _skip_reason(rel_parts: tuple, data: bytes) -> str | None:
    name = rel_parts[-1]
    for part in rel_parts[:-1]:
        if part in _VCS_DIRS:
            return "VCS metadata"
        if part.startswith("processor"):
            return "decomposed processor directory"
    if len(rel_parts) >= 3 and rel_parts[0] == "constant" and "polyMesh" in rel_parts[:-1]:
        return "generated mesh data"
    if name.startswith("log.") or name.endswith(".log"):
        return "log file"
    if b"\x00" in data[:8192]:
        return "binary file"
    return None


def _strip_leading_banner(text: str) -> str:
    # Drop the decorative comment header: any run of block comments and
    # line comments before the first real content.
    i = 0
    n = len(text)
    while i < n:
        while i < n and text[i] in " \t\r\n":
            i += 1
        if text.startswith("/*", i):
            end = text.find("*/", i + 2)
            if end == -1:
                break
            i = end + 2
        elif text.startswith("//", i):
            end = text.find("\n", i)
            i = n if end == -1 else end + 1
        else:
            break
    return text[i:]


_FOAMFILE_RE = re.compile(r"(?m)^[ \t]*FoamFile\s*\{")


def _strip_foamfile_block(text: str) -> str:
    m = _FOAMFILE_RE.search(text)
    if not m:
        return text
    depth = 0
    i = text.index("{", m.start())
    for j in range(i, len(text)):
        if text[j] == "{":
            depth += 1
        elif text[j] == "}":
            depth -= 1
            if depth == 0:
                end = j + 1
                if end < len(text) and text[end] == "\n":
                    end += 1
                return text[:m.start()] + text[end:]
    return text


def _clean_content(raw: str) -> str:
    text = raw.replace("\r\n", "\n").replace("\r", "\n")
    text = _strip_leading_banner(text)
    text = _strip_foamfile_block(text)
    text = text.lstrip("\n")
    if text and not text.endswith("\n"):
        text += "\n"
    return text


def load_case(root: str | Path) -> CaseTree:
    """Walk a case directory into a CaseTree: raw text plus a best-effort
    parse per file; unreadable or generated files are recorded as skipped."""
    root = Path(root)
    if not root.is_dir():
        raise RootMissing(str(root))
    files: dict = {}
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root).as_posix()
        try:
            data = path.read_bytes()
        except OSError as exc:
            files[rel] = CaseFile(rel, skipped=True, skip_reason=f"unreadable: {exc}")
            continue
        reason = _skip_reason(tuple(rel.split("/")), data)
        if reason is not None:
            files[rel] = CaseFile(rel, skipped=True, skip_reason=reason)
            continue
        raw = data.decode("utf-8", errors="replace")
        parsed = None
        try:
            parsed = parse_dict(raw)
        except foamdict.ParseError:
            parsed = None
        files[rel] = CaseFile(rel, raw=raw, parsed=parsed)
    return CaseTree(root=root, files=files)


def flatten_case(root: str | Path) -> CaseSnapshot:
    """Flatten a case directory into one string: each kept file emitted as
    "==== file: {rel_path} ====" followed by its cleaned content, in sorted
    rel_path order."""
    tree = load_case(root)
    pieces = []
    count = 0
    for rel in sorted(tree.files):
        rec = tree.files[rel]
        if rec.skipped:
            continue
        header = SNAPSHOT_DELIMITER.format(rel_path=rel)
        pieces.append(f"{header}\n{_clean_content(rec.raw)}")
        count += 1
    text = "".join(pieces)
    return CaseSnapshot(text=text, file_count=count,
                        token_estimate=estimate_tokens(text))


def build_config_prompt(case_path: str, user_request: str,
                        snapshot: CaseSnapshot) -> str:
    return render_prompt_template("CaseConfig", {
        "case_path": case_path,
        "user_request": user_request,
        "case_contents": snapshot.text,
    })


def _render_node(node: FoamNode) -> str:
    if isinstance(node, FoamDict):
        return serialize_dict(node)
    try:
        return foamdict._inline(node)
    except foamdict._NotInlinable:
        return serialize_dict(FoamDict([("_", node)]))


def _join_path(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _diff_nodes(a: FoamNode, b: FoamNode, path: str) -> list:
    if a == b:
        return []
    if isinstance(a, FoamDict) and isinstance(b, FoamDict):
        keys_a = [kw for kw, _ in a.entries]
        keys_b = [kw for kw, _ in b.entries]
        if keys_a == keys_b and all(kw is not None for kw in keys_a) \
                and len(set(keys_a)) == len(keys_a):
            out = []
            for (kw, va), (_, vb) in zip(a.entries, b.entries):
                out.extend(_diff_nodes(va, vb, _join_path(path, kw)))
            return out
        return [(path, _render_node(a), _render_node(b))]
    if isinstance(a, FoamList) and isinstance(b, FoamList) \
            and len(a.items) == len(b.items) and a.bare == b.bare \
            and all(isinstance(i, FoamDict) for i in a.items) \
            and all(isinstance(i, FoamDict) for i in b.items):
        # recurse through lists of dicts (e.g. topoSet actions); lists of
        # values are reported whole so a vector edit stays one diff
        out = []
        for i, (ia, ib) in enumerate(zip(a.items, b.items)):
            out.extend(_diff_nodes(ia, ib, f"{path}[{i}]"))
        return out
    return [(path, _render_node(a), _render_node(b))]


def diff_case(before: CaseTree, after: CaseTree) -> list:
    """Structural diff of two case states; parsed files diff down to the
    changed keypaths, raw files diff by line."""
    diffs: list = []
    all_paths = sorted(set(before.files) | set(after.files))
    for rel in all_paths:
        fa = before.files.get(rel)
        fb = after.files.get(rel)
        if fa is None or fa.skipped:
            fa = None
        if fb is None or fb.skipped:
            fb = None
        if fa is None and fb is None:
            continue
        if fa is None:
            diffs.append(CaseDiff(rel, None, None, fb.raw))
            continue
        if fb is None:
            diffs.append(CaseDiff(rel, None, fa.raw, None))
            continue
        if fa.parsed is not None and fb.parsed is not None:
            for keypath, old, new in _diff_nodes(fa.parsed, fb.parsed, ""):
                diffs.append(CaseDiff(rel, keypath or None, old, new))
            continue
        if fa.raw != fb.raw:
            removed, added = [], []
            for line in difflib.ndiff(fa.raw.splitlines(), fb.raw.splitlines()):
                if line.startswith("- "):
                    removed.append(line[2:])
                elif line.startswith("+ "):
                    added.append(line[2:])
            diffs.append(CaseDiff(rel, None, "\n".join(removed), "\n".join(added)))
    return diffs
