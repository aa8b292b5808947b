"""Sparse term-frequency vectors over lowercased, punctuation-stripped tokens."""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping


def _is_edge_junk(ch: str) -> bool:
    return unicodedata.category(ch)[0] in "PS"


@lru_cache(maxsize=65536)
def _strip_token(tok: str) -> str:
    i, j = 0, len(tok)
    while i < j and _is_edge_junk(tok[i]):
        i += 1
    while j > i and _is_edge_junk(tok[j - 1]):
        j -= 1
    return tok[i:j]


def tokenize_terms(text: str) -> list[str]:
    """Whitespace tokens, lowercased, with leading/trailing punctuation and symbols removed."""
    out = []
    for tok in text.lower().split():
        if not (tok[0].isalnum() and tok[-1].isalnum()):
            tok = _strip_token(tok)
            if not tok:
                continue
        out.append(tok)
    return out


@dataclass(frozen=True)
class TermVector:
    counts: Mapping[str, int]
    norm: float = field(default=0.0)

    @classmethod
    def from_counts(cls, counts: Mapping[str, int]) -> "TermVector":
        counts = {t: c for t, c in counts.items() if c > 0}
        return cls(counts, math.sqrt(sum(c * c for c in counts.values())))

    @classmethod
    def from_text(cls, text: str) -> "TermVector":
        return cls.from_counts(Counter(tokenize_terms(text)))

    def __len__(self) -> int:
        return len(self.counts)

    def dot(self, other: "TermVector") -> float:
        a, b = (self.counts, other.counts) if len(self) <= len(other) else (other.counts, self.counts)
        return float(sum(c * b.get(t, 0) for t, c in a.items()))


def cosine(a: TermVector, b: TermVector) -> float:
    """Cosine similarity; 0.0 when either vector is empty."""
    if a.norm == 0.0 or b.norm == 0.0:
        return 0.0
    if a is b:
        return 1.0
    return min(1.0, max(0.0, a.dot(b) / (a.norm * b.norm)))
