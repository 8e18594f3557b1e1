"""Code search pipeline: scan a C++ tree, pair .H headers with same-stem .C
sources, strip license banners, prepend a path line, embed (truncated to the
embedding window), and serve exact cosine search from a persistent index.

Search is a brute-force scan: corpora here are hundreds of documents, where
exact scoring is instant and approximate structures only add failure modes.
"""

from __future__ import annotations

import fnmatch
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .messages import estimate_tokens

FORMAT_VERSION = 1
MAGIC = b"FPIX"
DEFAULT_EMBED_TOKENS = 8192
DEFAULT_INCLUDE = ("**/*.H", "**/*.C")
DEFAULT_EXCLUDE = ("**/lnInclude/**", "**/Make/**")

_BANNER_NEEDLES = ("License", "GNU General Public License", "\\*---")


class RootMissing(FileNotFoundError):
    pass


class EmptyPair(ValueError):
    pass


class EmbedderError(RuntimeError):
    pass


class DimensionMismatch(ValueError):
    pass


class ZeroVector(ValueError):
    pass


class VersionMismatch(ValueError):
    pass


class CorruptIndex(ValueError):
    pass


@dataclass(frozen=True)
class CorpusPair:
    header: Path | None
    source: Path | None
    rel_path: str  # header's rel path when paired, else the lone file's


@dataclass(frozen=True)
class SourceDoc:
    doc_id: int
    rel_path: str
    full_text: str
    paired: bool


@dataclass(frozen=True)
class EmbeddedDoc:
    doc: SourceDoc
    vector: np.ndarray  # unit L2 norm, float32
    embedded_chars: int


@dataclass
class VectorIndex:
    dimension: int
    docs: list
    embed_model_tag: str
    format_version: int = FORMAT_VERSION
    _matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None or len(self._matrix) != len(self.docs):
            self._matrix = np.stack([d.vector for d in self.docs]) if self.docs \
                else np.zeros((0, self.dimension), dtype=np.float32)
        return self._matrix


def _matches(rel: str, globs) -> bool:
    for g in globs:
        if fnmatch.fnmatch(rel, g):
            return True
        # fnmatch has no dir-aware **: also try with the leading **/ dropped
        # so top-level files match patterns like **/*.H
        if g.startswith("**/") and fnmatch.fnmatch(rel, g[3:]):
            return True
    return False


def scan_corpus(root: str | Path, include_globs=DEFAULT_INCLUDE,
                exclude_globs=DEFAULT_EXCLUDE) -> list:
    """Collect header/source pairs under root: a .H pairs with a .C of the
    same stem in the same directory; anything unpaired becomes a singleton.
    Order is lexicographic by the pair's representative rel_path."""
    root = Path(root)
    if not root.is_dir():
        raise RootMissing(str(root))
    kept = []
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root).as_posix()
        if not _matches(rel, include_globs):
            continue
        if exclude_globs and _matches(rel, exclude_globs):
            continue
        kept.append((rel, path))
    by_rel = dict(kept)
    pairs = []
    claimed = set()
    for rel, path in kept:
        if rel in claimed:
            continue
        if rel.endswith(".H"):
            mate_rel = rel[:-2] + ".C"
            mate = by_rel.get(mate_rel)
            if mate is not None:
                claimed.add(mate_rel)
                pairs.append(CorpusPair(header=path, source=mate, rel_path=rel))
            else:
                pairs.append(CorpusPair(header=path, source=None, rel_path=rel))
        elif rel.endswith(".C"):
            mate_rel = rel[:-2] + ".H"
            if mate_rel in by_rel:
                continue  # will be claimed when the header is visited
            pairs.append(CorpusPair(header=None, source=path, rel_path=rel))
        else:
            pairs.append(CorpusPair(header=None, source=path, rel_path=rel))
    pairs.sort(key=lambda p: p.rel_path)
    return pairs


def strip_boilerplate(text: str) -> str:
    """Remove leading license/banner block comments; every character after
    the first non-comment token is left untouched, and non-banner comments
    (including all inline ones) are preserved."""
    spans = []
    i = 0
    n = len(text)
    while i < n:
        j = i
        while j < n and text[j] in " \t\r\n":
            j += 1
        if text.startswith("/*", j):
            end = text.find("*/", j + 2)
            if end == -1:
                break
            end += 2
            body = text[j:end]
            if any(needle in body for needle in _BANNER_NEEDLES):
                stop = end
                while stop < n and text[stop] in " \t":
                    stop += 1
                if stop < n and text[stop] == "\n":
                    stop += 1
                spans.append((j, stop))
            i = end
        elif text.startswith("//", j):
            nl = text.find("\n", j)
            i = n if nl == -1 else nl + 1
        else:
            break
    if not spans:
        return text
    out = []
    pos = 0
    for a, b in spans:
        out.append(text[pos:a])
        pos = b
    out.append(text[pos:])
    return "".join(out).lstrip("\n")


def prepare_document(pair: CorpusPair, doc_id: int = 0) -> SourceDoc:
    """Combine a pair into one document: a "// File: {rel_path}" line, then
    the stripped header, then the stripped source."""
    if pair.header is None and pair.source is None:
        raise EmptyPair("pair has neither header nor source")
    parts = [f"// File: {pair.rel_path}"]
    for path in (pair.header, pair.source):
        if path is not None:
            text = path.read_text(encoding="utf-8", errors="replace")
            parts.append(strip_boilerplate(text).rstrip("\n"))
    return SourceDoc(doc_id=doc_id, rel_path=pair.rel_path,
                     full_text="\n".join(parts) + "\n",
                     paired=pair.header is not None and pair.source is not None)


def truncate_for_embedding(text: str, max_tokens: int) -> str:
    """Longest prefix whose token estimate fits max_tokens, cut back to a
    line boundary when one exists in the prefix."""
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    if estimate_tokens(text) <= max_tokens:
        return text
    raw = text.encode("utf-8")[:max_tokens * 4]
    prefix = raw.decode("utf-8", errors="ignore")
    nl = prefix.rfind("\n")
    if nl > 0:
        return prefix[:nl + 1]
    return prefix


def build_index(docs: list, embedder, max_tokens: int = DEFAULT_EMBED_TOKENS,
                embed_model_tag: str = "") -> VectorIndex:
    """Embed each document's truncated text and assemble the index; doc ids
    are reassigned densely from 0 in input order."""
    if not docs:
        raise ValueError("docs must be non-empty")
    truncated = [truncate_for_embedding(d.full_text, max_tokens) for d in docs]
    try:
        raw_vectors = embedder.embed(truncated)
    except (ValueError, RuntimeError) as exc:
        raise EmbedderError(str(exc)) from exc
    if len(raw_vectors) != len(docs):
        raise EmbedderError(
            f"embedder returned {len(raw_vectors)} vectors for {len(docs)} docs")
    dim = len(raw_vectors[0])
    entries = []
    for i, (doc, vec, text) in enumerate(zip(docs, raw_vectors, truncated)):
        if len(vec) != dim:
            raise DimensionMismatch(f"vector {i} has dim {len(vec)}, expected {dim}")
        arr = np.asarray(vec, dtype=np.float32)
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            raise ZeroVector(f"embedder returned a zero vector for doc {i}")
        arr = (arr / norm).astype(np.float32)
        entries.append(EmbeddedDoc(
            doc=SourceDoc(doc_id=i, rel_path=doc.rel_path,
                          full_text=doc.full_text, paired=doc.paired),
            vector=arr,
            embedded_chars=len(text)))
    tag = embed_model_tag or getattr(embedder, "model_tag", "") \
        or type(embedder).__name__
    return VectorIndex(dimension=dim, docs=entries, embed_model_tag=tag)


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatch(f"dimensions differ: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine undefined for zero vectors")
    return float(np.dot(u, v) / (nu * nv))


def search(index: VectorIndex, query_vector, k: int) -> list:
    """Exact top-k scan: descending cosine score, ties broken by ascending
    doc_id; each hit carries the doc's FULL text regardless of what was
    embedded."""
    if k < 1:
        raise ValueError("k must be >= 1")
    q = np.asarray(query_vector, dtype=np.float64)
    if q.shape != (index.dimension,):
        raise DimensionMismatch(
            f"query dim {q.shape} does not match index dim {index.dimension}")
    nq = float(np.linalg.norm(q))
    if nq == 0.0:
        raise ZeroVector("query vector has zero norm")
    scores = index.matrix.astype(np.float64) @ (q / nq)
    doc_ids = np.array([d.doc.doc_id for d in index.docs])
    order = np.lexsort((doc_ids, -scores))
    out = []
    for idx in order[:min(k, len(index.docs))]:
        out.append((index.docs[int(idx)].doc, float(scores[int(idx)])))
    return out


# ---------------------------------------------------------------------------
# Persistence: magic | version u32 | crc32 u32 | payload
# payload: dim u32 | tag (len-prefixed) | count u32 | records
# record: doc_id u32 | rel_path | full_text | paired u8 | embedded_chars u32
#         | dim * f32 (little-endian)

def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptIndex("index file truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u8(self) -> int:
        return self.take(1)[0]

    def string(self) -> str:
        n = self.u32()
        return self.take(n).decode("utf-8")


def save_index(index: VectorIndex, path: str | Path) -> None:
    payload = bytearray()
    payload += struct.pack("<I", index.dimension)
    payload += _pack_str(index.embed_model_tag)
    payload += struct.pack("<I", len(index.docs))
    for ed in index.docs:
        payload += struct.pack("<I", ed.doc.doc_id)
        payload += _pack_str(ed.doc.rel_path)
        payload += _pack_str(ed.doc.full_text)
        payload += struct.pack("<B", 1 if ed.doc.paired else 0)
        payload += struct.pack("<I", ed.embedded_chars)
        vec = np.asarray(ed.vector, dtype="<f4")
        if vec.shape != (index.dimension,):
            raise DimensionMismatch(
                f"doc {ed.doc.doc_id} vector dim {vec.shape} != {index.dimension}")
        payload += vec.tobytes()
    blob = MAGIC + struct.pack("<II", index.format_version, zlib.crc32(payload))
    Path(path).write_bytes(blob + bytes(payload))


def load_index(path: str | Path) -> VectorIndex:
    data = Path(path).read_bytes()
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CorruptIndex("bad magic; not an index file")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise VersionMismatch(
            f"index format version {version}, this build reads {FORMAT_VERSION}")
    checksum = r.u32()
    payload = data[r.pos:]
    if zlib.crc32(payload) != checksum:
        raise CorruptIndex("checksum mismatch; file is damaged")
    dim = r.u32()
    tag = r.string()
    count = r.u32()
    docs = []
    for _ in range(count):
        doc_id = r.u32()
        rel_path = r.string()
        full_text = r.string()
        paired = r.u8() != 0
        embedded_chars = r.u32()
        vec = np.frombuffer(r.take(dim * 4), dtype="<f4").copy()
        docs.append(EmbeddedDoc(
            doc=SourceDoc(doc_id=doc_id, rel_path=rel_path,
                          full_text=full_text, paired=paired),
            vector=vec, embedded_chars=embedded_chars))
    if r.pos != len(data):
        raise CorruptIndex("trailing bytes after the last record")
    return VectorIndex(dimension=dim, docs=docs, embed_model_tag=tag,
                       format_version=version)
