"""Parser, serializer, and keypath editor for OpenFOAM dictionary files.

The AST keeps five node shapes: ordered dictionaries, lists, scalars,
7-component dimension sets, and opaque directives (``#include …``,
``$macro``). Comments are dropped during tokenization. Serialization is
canonical (4-space indent, lists inline when short) rather than
whitespace-preserving; the contract is the structural round-trip law
parse(serialize(parse(x))) == parse(x).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

INLINE_WIDTH = 80
_INDENT = "    "


class ParseError(ValueError):
    def __init__(self, line: int, column: int, expected: str, found: str = ""):
        self.line = line
        self.column = column
        self.expected = expected
        msg = f"line {line}, column {column}: expected {expected}"
        if found:
            msg += f", found {found!r}"
        super().__init__(msg)


class PathNotFound(KeyError):
    def __init__(self, keypath: str, matched_prefix: str):
        self.keypath = keypath
        self.matched_prefix = matched_prefix
        super().__init__(
            f"keypath {keypath!r} not found (matched prefix: {matched_prefix!r})")


class IndexOutOfRange(IndexError):
    def __init__(self, keypath: str, index: int, length: int):
        self.keypath = keypath
        self.index = index
        self.length = length
        super().__init__(
            f"index [{index}] out of range (list has {length} items) in {keypath!r}")


@dataclass(frozen=True)
class FoamScalar:
    value: object  # int | float | bool | str
    kind: str      # "int" | "float" | "bool" | "word" | "string"


@dataclass(frozen=True)
class FoamDirective:
    text: str  # raw source, e.g. '#include "initialConditions"' or "$innerValue"


@dataclass(frozen=True)
class FoamDims:
    exponents: tuple  # exactly 7 signed integers

    def __post_init__(self):
        if len(self.exponents) != 7:
            raise ValueError("dimension set must have exactly 7 components")


@dataclass
class FoamList:
    items: list
    # A bare list is a run of entry-value tokens with no surrounding parens
    # ("default Gauss linear;"); it only exists at entry-value position and
    # never holds exactly one item (a single token is stored directly).
    bare: bool = False

    def __post_init__(self):
        if self.bare and len(self.items) == 1:
            raise ValueError("bare list with one item must be the item itself")


@dataclass
class FoamDict:
    # (keyword, value) pairs in source order; keyword None marks a
    # standalone directive line inside the dictionary body.
    entries: list = field(default_factory=list)

    def get(self, key: str):
        for kw, val in self.entries:
            if kw == key:
                return val
        raise KeyError(key)

    def __contains__(self, key: str) -> bool:
        return any(kw == key for kw, _ in self.entries)

    def keys(self) -> list:
        return [kw for kw, _ in self.entries if kw is not None]


FoamNode = Union[FoamScalar, FoamDirective, FoamDims, FoamList, FoamDict]


# ---------------------------------------------------------------------------
# Tokenizer

_PUNCT = "(){}[];"
_WORD_STOP = set(_PUNCT) | {'"', "#"}

_INT_RE = re.compile(r"[+-]?\d+\Z")
_FLOAT_RE = re.compile(r"[+-]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?\Z")


@dataclass(frozen=True)
class _Tok:
    kind: str  # "punct" | "word" | "string" | "directive" | "eof"
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list:
    toks = []
    i = 0
    n = len(text)
    line = 1
    col = 1

    def advance(k: int):
        nonlocal i, line, col
        for _ in range(k):
            if i < n and text[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        c = text[i]
        if c in " \t\r\n":
            advance(1)
            continue
        if c == "/" and i + 1 < n:
            if text[i + 1] == "/":
                j = text.find("\n", i)
                advance((j if j != -1 else n) - i)
                continue
            if text[i + 1] == "*":
                j = text.find("*/", i + 2)
                if j == -1:
                    raise ParseError(line, col, "closing */ for block comment")
                advance(j + 2 - i)
                continue
        if c in _PUNCT:
            toks.append(_Tok("punct", c, line, col))
            advance(1)
            continue
        if c == '"':
            sl, sc = line, col
            j = i + 1
            while j < n:
                if text[j] == "\\" and j + 1 < n:
                    j += 2
                    continue
                if text[j] == '"':
                    break
                j += 1
            else:
                raise ParseError(sl, sc, 'closing " for string')
            if j >= n:
                raise ParseError(sl, sc, 'closing " for string')
            inner = text[i + 1:j]
            toks.append(_Tok("string", inner, sl, sc))
            advance(j + 1 - i)
            continue
        if c == "#":
            sl, sc = line, col
            j = text.find("\n", i)
            if j == -1:
                j = n
            raw = text[i:j].rstrip()
            advance(j - i)
            if raw.endswith(";"):
                toks.append(_Tok("directive", raw[:-1].rstrip(), sl, sc))
                toks.append(_Tok("punct", ";", sl, sc))
            else:
                toks.append(_Tok("directive", raw, sl, sc))
            continue
        if c == "$":
            sl, sc = line, col
            j = i + 1
            while j < n and not text[j].isspace() and text[j] not in _WORD_STOP:
                j += 1
            toks.append(_Tok("directive", text[i:j], sl, sc))
            advance(j - i)
            continue
        # word: runs to whitespace/delimiter, but absorbs balanced parens so
        # scheme names like div(phi,U) stay one token
        sl, sc = line, col
        j = i
        depth = 0
        while j < n:
            ch = text[j]
            if depth > 0:
                if ch.isspace():
                    raise ParseError(sl, sc, "balanced parentheses in word")
                if ch == "(":
                    depth += 1
                elif ch == ")":
                    depth -= 1
                j += 1
                continue
            if ch == "(" and j > i:
                # scheme keys like div(phi,U) are one word: absorb balanced
                # parens directly attached to word characters
                depth += 1
                j += 1
                continue
            if ch.isspace() or ch in _WORD_STOP or ch == ")":
                break
            if ch == "/" and j + 1 < n and text[j + 1] in "/*":
                break
            j += 1
        if depth > 0:
            raise ParseError(sl, sc, "balanced parentheses in word")
        if j == i:
            raise ParseError(line, col, "a token", found=c)
        toks.append(_Tok("word", text[i:j], sl, sc))
        advance(j - i)
    toks.append(_Tok("eof", "", line, col))
    return toks


def _classify_word(text: str) -> FoamScalar:
    if text == "true":
        return FoamScalar(True, "bool")
    if text == "false":
        return FoamScalar(False, "bool")
    if _INT_RE.match(text):
        return FoamScalar(int(text), "int")
    if _FLOAT_RE.match(text) and any(ch.isdigit() for ch in text):
        try:
            return FoamScalar(float(text), "float")
        except ValueError:
            pass
    return FoamScalar(text, "word")


# ---------------------------------------------------------------------------
# Parser

class _Parser:
    def __init__(self, toks: list):
        self.toks = toks
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def body(self, closing: str | None) -> FoamDict:
        entries = []
        while True:
            tok = self.peek()
            if tok.kind == "eof":
                if closing is None:
                    return FoamDict(entries)
                raise ParseError(tok.line, tok.col, f"'{closing}'", found="end of input")
            if tok.kind == "punct" and tok.text == closing:
                self.take()
                return FoamDict(entries)
            if tok.kind == "directive":
                self.take()
                if self.peek().kind == "punct" and self.peek().text == ";":
                    self.take()
                entries.append((None, FoamDirective(tok.text)))
                continue
            if tok.kind in ("word", "string"):
                entries.append(self.entry())
                continue
            raise ParseError(tok.line, tok.col, "a keyword or directive",
                             found=tok.text)

    def entry(self):
        kw_tok = self.take()
        keyword = f'"{kw_tok.text}"' if kw_tok.kind == "string" else kw_tok.text
        tok = self.peek()
        if tok.kind == "punct" and tok.text == "{":
            self.take()
            return (keyword, self.body("}"))
        values = []
        while True:
            tok = self.peek()
            if tok.kind == "punct" and tok.text == ";":
                self.take()
                break
            if tok.kind == "eof" or (tok.kind == "punct" and tok.text == "}"):
                raise ParseError(tok.line, tok.col, "';'",
                                 found=tok.text or "end of input")
            values.append(self.value())
        if not values:
            return (keyword, FoamList([], bare=True))
        if len(values) == 1:
            return (keyword, values[0])
        return (keyword, FoamList(values, bare=True))

    def value(self) -> FoamNode:
        tok = self.take()
        if tok.kind == "word":
            return _classify_word(tok.text)
        if tok.kind == "string":
            return FoamScalar(tok.text, "string")
        if tok.kind == "directive":
            return FoamDirective(tok.text)
        if tok.kind == "punct" and tok.text == "(":
            items = []
            while True:
                nxt = self.peek()
                if nxt.kind == "punct" and nxt.text == ")":
                    self.take()
                    return FoamList(items, bare=False)
                if nxt.kind == "eof":
                    raise ParseError(nxt.line, nxt.col, "')'", found="end of input")
                if nxt.kind == "punct" and nxt.text == "{":
                    self.take()
                    items.append(self.body("}"))
                    continue
                if nxt.kind == "punct" and nxt.text in ";}":
                    raise ParseError(nxt.line, nxt.col, "a list item or ')'",
                                     found=nxt.text)
                items.append(self.value())
        if tok.kind == "punct" and tok.text == "[":
            exps = []
            while True:
                nxt = self.take()
                if nxt.kind == "punct" and nxt.text == "]":
                    break
                if nxt.kind == "word" and _INT_RE.match(nxt.text):
                    exps.append(int(nxt.text))
                    continue
                raise ParseError(nxt.line, nxt.col,
                                 "an integer dimension exponent or ']'",
                                 found=nxt.text or "end of input")
            if len(exps) != 7:
                raise ParseError(tok.line, tok.col,
                                 f"a 7-integer dimension set (got {len(exps)})")
            return FoamDims(tuple(exps))
        if tok.kind == "punct" and tok.text == "{":
            return self.body("}")
        raise ParseError(tok.line, tok.col, "a value", found=tok.text or "end of input")


def parse_dict(text: str) -> FoamDict:
    """Parse OpenFOAM dictionary source into an AST. Comments are discarded;
    directives and macros stay opaque. Raises ParseError with line/column on
    unbalanced delimiters or missing semicolons."""
    parser = _Parser(_tokenize(text))
    return parser.body(None)


# ---------------------------------------------------------------------------
# Serializer

class _NotInlinable(Exception):
    pass


def _scalar_text(node: FoamScalar) -> str:
    if node.kind == "bool":
        return "true" if node.value else "false"
    if node.kind == "int":
        return str(node.value)
    if node.kind == "float":
        return repr(node.value)
    if node.kind == "string":
        return f'"{node.value}"'
    return str(node.value)


def _inline(node: FoamNode) -> str:
    if isinstance(node, FoamScalar):
        return _scalar_text(node)
    if isinstance(node, FoamDirective):
        # '#'-directives run to end of line when reparsed; they may not be
        # embedded in an inline rendering
        if node.text.startswith("#"):
            raise _NotInlinable
        return node.text
    if isinstance(node, FoamDims):
        return "[" + " ".join(str(e) for e in node.exponents) + "]"
    if isinstance(node, FoamList):
        inner = " ".join(_inline(item) for item in node.items)
        return inner if node.bare else f"({inner})"
    if isinstance(node, FoamDict):
        raise _NotInlinable
    raise TypeError(f"not a FoamNode: {node!r}")


def _item_lines(item: FoamNode, depth: int) -> list:
    pad = _INDENT * depth
    if isinstance(item, FoamDict):
        return [pad + "{"] + _body_lines(item, depth + 1) + [pad + "}"]
    if isinstance(item, FoamDirective):
        return [pad + item.text]
    if isinstance(item, FoamList) and not item.bare:
        try:
            s = _inline(item)
            if len(pad + s) <= INLINE_WIDTH:
                return [pad + s]
        except _NotInlinable:
            pass
        return _list_lines(item, depth)
    return [pad + _inline(item)]


def _list_lines(lst: FoamList, depth: int) -> list:
    pad = _INDENT * depth
    lines = [pad + "("]
    for item in lst.items:
        lines.extend(_item_lines(item, depth + 1))
    lines.append(pad + ")")
    return lines


def _entry_lines(keyword, value: FoamNode, depth: int) -> list:
    pad = _INDENT * depth
    if keyword is None:
        return [pad + value.text]
    if isinstance(value, FoamDict):
        return ([pad + keyword, pad + "{"]
                + _body_lines(value, depth + 1)
                + [pad + "}"])
    if isinstance(value, FoamDirective):
        return [f"{pad}{keyword} {value.text};"]
    if isinstance(value, FoamList) and value.bare and not value.items:
        return [pad + keyword + ";"]
    try:
        line = f"{pad}{keyword} {_inline(value)};"
        if len(line) <= INLINE_WIDTH or not isinstance(value, FoamList) or value.bare:
            return [line]
    except _NotInlinable:
        pass
    if isinstance(value, FoamList) and not value.bare:
        lines = [pad + keyword] + _list_lines(value, depth)
        lines[-1] += ";"
        return lines
    # bare run containing a '#'-directive: one token per line, ';' terminator
    lines = [pad + keyword]
    for item in value.items:
        lines.extend(_item_lines(item, depth + 1))
    lines.append(pad + ";")
    return lines


def _body_lines(node: FoamDict, depth: int) -> list:
    lines = []
    for keyword, value in node.entries:
        lines.extend(_entry_lines(keyword, value, depth))
    return lines


def serialize_dict(node: FoamDict) -> str:
    """Render an AST in canonical form: 4-space indent, one entry per line,
    lists inline when the line fits in 80 chars. Output reparses to a
    structurally equal tree."""
    lines = _body_lines(node, 0)
    return "\n".join(lines) + "\n" if lines else ""


# ---------------------------------------------------------------------------
# Keypath addressing

_SEG_RE = re.compile(r"([^.\[\]]+)((?:\[\d+\])*)\Z")


def _keypath_steps(keypath: str) -> list:
    if not keypath:
        raise ValueError("empty keypath")
    steps = []
    for seg in keypath.split("."):
        m = _SEG_RE.match(seg)
        if not m:
            raise ValueError(f"bad keypath segment: {seg!r}")
        steps.append(("key", m.group(1)))
        for idx in re.findall(r"\[(\d+)\]", m.group(2)):
            steps.append(("idx", int(idx)))
    return steps


def _step_text(step) -> str:
    return step[1] if step[0] == "key" else f"[{step[1]}]"


def _prefix_text(steps, upto: int) -> str:
    out = ""
    for kind, val in steps[:upto]:
        if kind == "key":
            out += ("." if out else "") + val
        else:
            out += f"[{val}]"
    return out


def get_entry(node: FoamNode, keypath: str) -> FoamNode:
    """Return the node addressed by a dot/[i] keypath like
    "actions[0].sourceInfo.box"."""
    steps = _keypath_steps(keypath)
    cur = node
    for pos, (kind, val) in enumerate(steps):
        if kind == "key":
            if not isinstance(cur, FoamDict) or val not in cur:
                raise PathNotFound(keypath, _prefix_text(steps, pos))
            cur = cur.get(val)
        else:
            if not isinstance(cur, FoamList):
                raise PathNotFound(keypath, _prefix_text(steps, pos))
            if not 0 <= val < len(cur.items):
                raise IndexOutOfRange(keypath, val, len(cur.items))
            cur = cur.items[val]
    return cur


def set_entry(node: FoamNode, keypath: str, value: FoamNode) -> FoamNode:
    """Return a new tree with the addressed node replaced; the input tree is
    untouched and entry order is preserved."""
    steps = _keypath_steps(keypath)

    def rebuild(cur: FoamNode, pos: int) -> FoamNode:
        if pos == len(steps):
            return value
        kind, val = steps[pos]
        if kind == "key":
            if not isinstance(cur, FoamDict):
                raise PathNotFound(keypath, _prefix_text(steps, pos))
            for i, (kw, child) in enumerate(cur.entries):
                if kw == val:
                    new_entries = list(cur.entries)
                    new_entries[i] = (kw, rebuild(child, pos + 1))
                    return FoamDict(new_entries)
            raise PathNotFound(keypath, _prefix_text(steps, pos))
        if not isinstance(cur, FoamList):
            raise PathNotFound(keypath, _prefix_text(steps, pos))
        if not 0 <= val < len(cur.items):
            raise IndexOutOfRange(keypath, val, len(cur.items))
        new_items = list(cur.items)
        new_items[val] = rebuild(cur.items[val], pos + 1)
        return FoamList(new_items, bare=cur.bare)

    return rebuild(node, 0)
