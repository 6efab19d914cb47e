"""Shared tokenization helpers and the English stop-word list."""

from __future__ import annotations

import re

# Small fixed stop-word list; used both for the English-language heuristic
# during corpus filtering and for token normalization before WMD.
STOP_WORDS = frozenset(
    """a an and are as at be been but by can could do does for from had has have
    he her his i if in is it its may might not of on or our she should so than
    that the their them they this to us was we were what when which who will
    with would you your""".split()
)

_TOKEN_RE = re.compile(r"[a-z0-9']+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumerics, keeping apostrophes."""
    return _TOKEN_RE.findall(text.lower())


def content_tokens(text: str) -> list[str]:
    """Tokens with stop words removed."""
    return [t for t in tokenize(text) if t not in STOP_WORDS]


def stopword_ratio(text: str) -> float:
    """Fraction of tokens that are English stop words (0 for empty text)."""
    toks = tokenize(text)
    if not toks:
        return 0.0
    return sum(t in STOP_WORDS for t in toks) / len(toks)
