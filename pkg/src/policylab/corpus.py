"""Corpus ingestion: document filtering and sentence decomposition.

Plain-text privacy policies come in one per file; each is gated through a
set of cheap heuristics (legal keywords, English stop-word ratio, minimum
length, duplicate hash) and then split into sentences. Bullet lists are
flattened by gluing each item to the text that introduces the list, so a
list item reads as a complete sentence on its own.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .text import stopword_ratio, tokenize

DEFAULT_LEGAL_KEYWORDS = (
    "privacy",
    "personal information",
    "collect",
    "third party",
    "data",
)


@dataclass(frozen=True)
class SourceMeta:
    app_category: Optional[str] = None
    downloads: Optional[int] = None
    rating: Optional[float] = None
    review_count: Optional[int] = None


@dataclass(frozen=True)
class RawDocument:
    doc_id: str
    text: str
    source_meta: Optional[SourceMeta] = None


@dataclass(frozen=True)
class Sentence:
    index: int
    text: str
    char_span: tuple[int, int]
    from_bullet: bool = False


@dataclass(frozen=True)
class Policy:
    doc_id: str
    sentences: tuple[Sentence, ...]
    filter_trace: tuple[str, ...] = ()


@dataclass(frozen=True)
class FilterConfig:
    legal_keywords: tuple[str, ...] = DEFAULT_LEGAL_KEYWORDS
    min_keyword_hits: int = 2
    stopword_ratio_threshold: float = 0.15
    min_chars: int = 500


@dataclass(frozen=True)
class FilterDecision:
    keep: bool
    reason: Optional[str] = None  # first failing gate when rejected
    passed: tuple[str, ...] = ()


class DegenerateDocumentError(ValueError):
    """Document has no usable sentences after splitting."""


def content_hash(text: str) -> str:
    """Hash over lowercased, whitespace-collapsed text."""
    normalized = " ".join(text.lower().split())
    return hashlib.sha1(normalized.encode("utf-8")).hexdigest()


def filter_document(
    doc: RawDocument, seen_hashes: set[str], config: FilterConfig = FilterConfig()
) -> FilterDecision:
    """Run the keep/reject gates in order; the duplicate hash of a kept
    document is added to ``seen_hashes`` as a side effect."""
    passed: list[str] = []
    lowered = doc.text.lower()

    hits = sum(1 for kw in config.legal_keywords if kw in lowered)
    if hits < config.min_keyword_hits:
        return FilterDecision(False, "non-legal", tuple(passed))
    passed.append("legal-keywords")

    if stopword_ratio(doc.text) < config.stopword_ratio_threshold:
        return FilterDecision(False, "non-english", tuple(passed))
    passed.append("english")

    if len(doc.text.strip()) < config.min_chars:
        return FilterDecision(False, "too-short", tuple(passed))
    passed.append("length")

    digest = content_hash(doc.text)
    if digest in seen_hashes:
        return FilterDecision(False, "duplicate", tuple(passed))
    passed.append("unique")

    seen_hashes.add(digest)
    return FilterDecision(True, None, tuple(passed))


_BULLET_RE = re.compile(r"^(\s*)([-•*]|\d+\.)\s+")
_ABBREVIATIONS = {
    "e.g", "i.e", "etc", "mr", "mrs", "ms", "dr", "prof",
    "inc", "ltd", "co", "corp", "vs", "st", "no", "u.s",
}
_TERMINAL_RE = re.compile(r"[.!?]+")


def _is_abbreviation(text: str, dot_pos: int) -> bool:
    # Look back from the terminal mark for the word it ends.
    start = dot_pos
    while start > 0 and (text[start - 1].isalnum() or text[start - 1] == "."):
        start -= 1
    word = text[start:dot_pos].lower().rstrip(".")
    if not word:
        return False
    if word in _ABBREVIATIONS or f"{word}." in _ABBREVIATIONS:
        return True
    # Single letters ("U.S. federal law", middle initials) never terminate.
    return len(word) == 1 and word.isalpha()


def _split_prose(text: str, offset: int) -> list[tuple[str, int, int]]:
    """Split a prose run into (sentence, start, end) with document offsets."""
    out: list[tuple[str, int, int]] = []
    start = 0
    for m in _TERMINAL_RE.finditer(text):
        end = m.end()
        if end < len(text) and not text[end].isspace():
            continue
        if m.group().startswith(".") and _is_abbreviation(text, m.start()):
            continue
        chunk = text[start:end]
        stripped = chunk.strip()
        if stripped:
            lead = len(chunk) - len(chunk.lstrip())
            out.append((stripped, offset + start + lead, offset + start + lead + len(stripped)))
        start = end
    tail = text[start:]
    if tail.strip():
        lead = len(tail) - len(tail.lstrip())
        s = tail.strip()
        out.append((s, offset + start + lead, offset + start + lead + len(s)))
    return out


def split_sentences(doc: RawDocument) -> Policy:
    """Decompose a document into ordered sentences.

    Bullet items become standalone sentences by prefixing the sentence that
    introduces the list; those share the introducer text and are flagged
    ``from_bullet`` (their char_span covers only the item itself).
    """
    text = doc.text
    # Partition the document into prose runs and bullet items, with offsets.
    blocks: list[tuple[str, str, int, int]] = []  # (kind, text, start, end)
    pos = 0
    prose_start: Optional[int] = None
    for line in text.splitlines(keepends=True):
        line_start = pos
        pos += len(line)
        m = _BULLET_RE.match(line)
        if m and line.strip():
            if prose_start is not None:
                blocks.append(("prose", text[prose_start:line_start], prose_start, line_start))
                prose_start = None
            item_start = line_start + m.end()
            item = line[m.end():].rstrip("\n").rstrip()
            blocks.append(("bullet", item, item_start, item_start + len(item)))
        else:
            if prose_start is None:
                prose_start = line_start
    if prose_start is not None:
        blocks.append(("prose", text[prose_start:], prose_start, len(text)))

    sentences: list[Sentence] = []
    idx = 0
    i = 0
    while i < len(blocks):
        kind, btext, bstart, _bend = blocks[i]
        if kind == "prose":
            parts = _split_prose(btext, bstart)
            # The last sentence before a bullet run introduces the list and
            # is repeated on every item rather than emitted on its own.
            followed_by_bullets = i + 1 < len(blocks) and blocks[i + 1][0] == "bullet"
            emit = parts[:-1] if (followed_by_bullets and parts) else parts
            intro = parts[-1][0] if (followed_by_bullets and parts) else ""
            for s, a, b in emit:
                sentences.append(Sentence(idx, s, (a, b)))
                idx += 1
            i += 1
            while i < len(blocks) and blocks[i][0] == "bullet":
                _, item, a, b = blocks[i]
                if item:
                    joined = f"{intro} {item}".strip()
                    sentences.append(Sentence(idx, joined, (a, b), from_bullet=True))
                    idx += 1
                i += 1
        else:  # bullet run with no introducer
            _, item, a, b = blocks[i]
            if item:
                sentences.append(Sentence(idx, item, (a, b), from_bullet=True))
                idx += 1
            i += 1

    if not sentences:
        raise DegenerateDocumentError(f"document {doc.doc_id!r} has no sentences")
    return Policy(doc_id=doc.doc_id, sentences=tuple(sentences))


def load_corpus(directory: str | Path, metadata_path: str | Path | None = None) -> list[RawDocument]:
    """Load a directory of UTF-8 .txt policies (file stem = doc_id) plus an
    optional JSON Lines metadata sidecar."""
    directory = Path(directory)
    meta: dict[str, SourceMeta] = {}
    if metadata_path is None:
        candidate = directory / "metadata.jsonl"
        metadata_path = candidate if candidate.exists() else None
    if metadata_path is not None:
        with open(metadata_path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                meta[rec["doc_id"]] = SourceMeta(
                    app_category=rec.get("app_category"),
                    downloads=rec.get("downloads"),
                    rating=rec.get("rating"),
                    review_count=rec.get("review_count"),
                )
    docs = []
    for path in sorted(directory.glob("*.txt")):
        text = path.read_text(encoding="utf-8")
        docs.append(RawDocument(doc_id=path.stem, text=text, source_meta=meta.get(path.stem)))
    return docs


def ingest(
    docs: Iterable[RawDocument], config: FilterConfig = FilterConfig()
) -> tuple[list[Policy], list[tuple[str, str]]]:
    """Filter and split a document stream; returns kept policies and
    (doc_id, reason) pairs for rejects."""
    seen: set[str] = set()
    kept: list[Policy] = []
    rejected: list[tuple[str, str]] = []
    for doc in docs:
        decision = filter_document(doc, seen, config)
        if not decision.keep:
            rejected.append((doc.doc_id, decision.reason or "unknown"))
            continue
        policy = split_sentences(doc)
        kept.append(Policy(policy.doc_id, policy.sentences, decision.passed))
    return kept, rejected
