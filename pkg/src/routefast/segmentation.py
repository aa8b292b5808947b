"""Rule-based multilingual sentence segmentation and token estimation.

Boundaries are Latin ``. ! ?`` (followed by whitespace or end of text), the
wide terminators ``。 ！ ？ ؟ । ॥`` (no whitespace needed), and newlines.
Sentence text never includes the whitespace between sentences, so the source
is recovered by interleaving ``Sentence.text`` with the gaps between spans.

The scanner is resumable: :class:`SentenceScanner` accepts text in pieces and
only finalizes a sentence once the bytes after it make the boundary
unambiguous. :func:`split_sentences` is the one-shot wrapper.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

from .terms import TermVector

CHARS_PER_TOKEN = 4
MAX_SENTENCE_CHARS = 2000
ABBREVIATIONS = frozenset({"mr", "mrs", "ms", "dr", "vs", "e.g", "i.e"})

_CJK = re.compile(
    "[\u3000-\u303f\u3040-\u30ff\u3400-\u4dbf\u4e00-\u9fff"
    "\uac00-\ud7af\uf900-\ufaff\uff00-\uffef\U00020000-\U0002fa1f]"
)
_CANDIDATE = re.compile(
    r"(?P<latin>[.!?]+)[\"'”’)\]»]*"
    r"|[。！？؟।॥]+[\"'”’)\]」』）»]*"
    r"|\n"
)
_ASCII_LETTERS = frozenset(string.ascii_letters)
_LETTER_DOTS = re.compile(r"[A-Za-z](?:\.[A-Za-z])+")


def char_counts(text: str) -> tuple[int, int]:
    """(non-CJK codepoints, CJK codepoints)."""
    if text.isascii():
        return len(text), 0
    cjk = len(_CJK.findall(text))
    return len(text) - cjk, cjk


def tokens_from_counts(other: int, cjk: int, chars_per_token: int = CHARS_PER_TOKEN) -> int:
    return -(-other // chars_per_token) + cjk


def estimate_tokens(text: str, chars_per_token: int = CHARS_PER_TOKEN) -> int:
    """ceil(non-CJK chars / chars_per_token) + one token per CJK codepoint."""
    if not text:
        return 0
    return tokens_from_counts(*char_counts(text), chars_per_token)


@dataclass(frozen=True)
class Sentence:
    index: int
    text: str
    token_estimate: int
    # code-point offsets into the source string
    char_span: tuple[int, int] = field(default=(0, 0))

    @cached_property
    def terms(self) -> TermVector:
        return TermVector.from_text(self.text)


def _is_abbreviation(buf: str, dot: int) -> bool:
    j = dot
    while j > 0 and (buf[j - 1] == "." or buf[j - 1] in _ASCII_LETTERS):
        j -= 1
    word = buf[j:dot]
    if not word:
        return False
    return word.lower() in ABBREVIATIONS or _LETTER_DOTS.fullmatch(word) is not None


def _is_boundary(buf: str, m: re.Match) -> bool:
    latin = m.group("latin")
    if latin is None:
        return True
    end = m.end()
    if end < len(buf) and not buf[end].isspace():
        return False
    if latin == "." and m.end("latin") == end and _is_abbreviation(buf, m.start()):
        return False
    return True


def _hard_split(text: str, limit: int) -> list[tuple[int, int]]:
    """Cut ``text`` into pieces of at most ``limit`` chars at the last whitespace that fits."""
    pieces = []
    start, n = 0, len(text)
    while n - start > limit:
        window = text[start : start + limit + 1]
        cut = max(window.rfind(" "), window.rfind("\t"), window.rfind("\n"), window.rfind("　"))
        if cut <= 0:
            cut = limit
        end = start + cut
        while end > start and text[end - 1].isspace():
            end -= 1
        pieces.append((start, end))
        start += cut
        while start < n and text[start].isspace():
            start += 1
    if start < n:
        pieces.append((start, n))
    return pieces


class SentenceScanner:
    """Incremental segmenter; ``feed`` returns sentences that can no longer change."""

    def __init__(self, max_chars: int = MAX_SENTENCE_CHARS):
        self.max_chars = max_chars
        self.sentences: list[Sentence] = []
        self._buf = ""
        self._base = 0
        self._scan = 0

    @property
    def pending_text(self) -> str:
        return self._buf

    def feed(self, text: str) -> list[Sentence]:
        if not text:
            return []
        buf = self._buf + text
        first = len(self.sentences)
        cut = 0
        pos = self._scan
        n = len(buf)
        while True:
            m = _CANDIDATE.search(buf, pos)
            if m is None:
                pos = n
                break
            end = m.end()
            if end == n and m.group() != "\n":
                # a longer terminator run, a closer or the deciding space may still arrive
                pos = m.start()
                break
            if _is_boundary(buf, m):
                self._emit(buf, cut, end)
                cut = end
            pos = end
        self._base += cut
        self._buf = buf[cut:]
        self._scan = pos - cut
        return self.sentences[first:]

    def flush(self) -> list[Sentence]:
        first = len(self.sentences)
        self._emit(self._buf, 0, len(self._buf))
        self._base += len(self._buf)
        self._buf = ""
        self._scan = 0
        return self.sentences[first:]

    def _emit(self, buf: str, start: int, end: int) -> None:
        while start < end and buf[start].isspace():
            start += 1
        while end > start and buf[end - 1].isspace():
            end -= 1
        if start == end:
            return
        region = buf[start:end]
        if len(region) <= self.max_chars:
            spans = [(0, len(region))]
        else:
            spans = _hard_split(region, self.max_chars)
        for a, b in spans:
            piece = region[a:b]
            g = self._base + start
            self.sentences.append(
                Sentence(len(self.sentences), piece, estimate_tokens(piece), (g + a, g + b))
            )


def split_sentences(text: str, max_chars: int = MAX_SENTENCE_CHARS) -> list[Sentence]:
    scanner = SentenceScanner(max_chars)
    scanner.feed(text)
    scanner.flush()
    return scanner.sentences


def cap_indices(n: int, cap: int) -> list[int]:
    """Uniform-stride sample of ``cap`` indices from ``range(n)``, endpoints included."""
    if cap < 2:
        raise ValueError("cap must be >= 2")
    if n <= cap:
        return list(range(n))
    step_num, step_den = n - 1, cap - 1
    # round-half-up of k * (n-1)/(cap-1); stride > 1 keeps indices distinct
    return [(2 * k * step_num + step_den) // (2 * step_den) for k in range(cap)]


def cap_sentences(sentences: Sequence[Sentence], cap: int) -> list[Sentence]:
    return [sentences[i] for i in cap_indices(len(sentences), cap)]


def gaps(source: str, sentences: Sequence[Sentence]) -> list[str]:
    """Inter-sentence text: ``len(sentences) + 1`` strings around the spans."""
    out, prev = [], 0
    for s in sentences:
        a, b = s.char_span
        out.append(source[prev:a])
        prev = b
    out.append(source[prev:])
    return out


def rejoin(source: str, sentences: Sequence[Sentence]) -> str:
    g = gaps(source, sentences)
    return "".join(g[i] + s.text for i, s in enumerate(sentences)) + g[-1]
