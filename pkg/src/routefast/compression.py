"""Extractive prompt compression: rank sentences, keep the boundaries, fill a token budget.

The compressed text is what the classifiers look at. Callers forward the
original prompt upstream; nothing here mutates a request body.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .segmentation import (
    Sentence,
    cap_indices,
    char_counts,
    estimate_tokens,
    split_sentences,
    tokens_from_counts,
)
from .signals import DAMPING, MAX_ITER, TOLERANCE, BufferPool, SignalScores, TermMatrix, compute_signals

DEFAULT_WEIGHTS = (0.20, 0.40, 0.35, 0.05)


@dataclass(frozen=True)
class CompressionConfig:
    max_tokens: int = 512
    # TextRank, position, TF-IDF, novelty
    weights: tuple[float, float, float, float] = DEFAULT_WEIGHTS
    depth: float = 0.5
    preserve_first_n: int = 3
    preserve_last_n: int = 2
    sentence_cap: int = 500
    damping: float = DAMPING
    tol: float = TOLERANCE
    max_iter: int = MAX_ITER

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "weights", w)
        if len(w) != 4 or any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
            raise ValueError(f"weights must be 4 non-negative values summing to 1, got {w}")
        if self.max_tokens < 16:
            raise ValueError("max_tokens must be >= 16")
        if self.preserve_first_n < 0 or self.preserve_last_n < 0:
            raise ValueError("preserve counts must be >= 0")
        if not 0.0 <= self.depth <= 1.0:
            raise ValueError("depth must lie in [0, 1]")
        if self.sentence_cap < 2:
            raise ValueError("sentence_cap must be >= 2")

    @classmethod
    def from_dict(cls, d: dict) -> "CompressionConfig":
        d = dict(d)
        if "weights" in d:
            d["weights"] = tuple(d["weights"])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CompressedPrompt:
    text: str
    selected_indices: tuple[int, ...]
    input_tokens: int
    output_tokens: int
    ratio: float
    compress_duration: float = field(default=0.0, compare=False)

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "selected_indices": list(self.selected_indices),
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "ratio": self.ratio,
            "duration_ms": self.compress_duration * 1e3,
        }


def max_normalize(x: np.ndarray) -> np.ndarray:
    m = float(x.max()) if len(x) else 0.0
    if m <= 0.0 or not math.isfinite(m):
        return np.zeros_like(x, dtype=np.float64)
    return np.asarray(x, dtype=np.float64) / m


def composite_rank(signals: SignalScores, weights: Sequence[float] = DEFAULT_WEIGHTS) -> np.ndarray:
    """Weighted sum of the four max-normalized signals."""
    s = np.zeros(len(signals))
    for w, arr in zip(weights, signals.as_tuple()):
        if w:
            s += w * max_normalize(arr)
    return np.clip(s, 0.0, 1.0)


def select(
    sentences: Sequence[Sentence],
    scores: np.ndarray,
    config: CompressionConfig,
) -> list[int]:
    """Positions (into ``sentences``) kept: forced boundaries, then best-ranked while the budget holds.

    Budget is checked against the estimate of the space-joined output, so the
    reported ``output_tokens`` can never exceed ``max_tokens`` unless the forced
    boundary sentences alone already do. Filling stops at the first sentence
    that does not fit, which makes a larger budget select a superset.
    """
    n = len(sentences)
    first = min(config.preserve_first_n, n)
    last = min(config.preserve_last_n, n - first)
    forced = list(range(first)) + list(range(n - last, n))
    counts = [char_counts(s.text) for s in sentences]

    other = cjk = 0
    for p in forced:
        other += counts[p][0]
        cjk += counts[p][1]
    chosen = set(forced)
    k = len(chosen)

    rest = [p for p in range(first, n - last)]
    rest.sort(key=lambda p: (-scores[p], p))
    for p in rest:
        o, c = counts[p]
        if tokens_from_counts(other + o + k, cjk + c) > config.max_tokens:
            break
        other += o
        cjk += c
        k += 1
        chosen.add(p)
    return sorted(chosen)


def capped_positions(n: int, config: CompressionConfig) -> list[int]:
    """Sentence cap that keeps the forced head/tail and samples the middle at uniform stride."""
    if n <= config.sentence_cap:
        return list(range(n))
    head = min(config.preserve_first_n, config.sentence_cap - 2)
    tail = min(config.preserve_last_n, config.sentence_cap - 2 - head)
    middle = cap_indices(n - head - tail, config.sentence_cap - head - tail)
    return list(range(head)) + [head + i for i in middle] + list(range(n - tail, n))


def compress_sentences(
    text: str,
    sentences: Sequence[Sentence],
    config: CompressionConfig | None = None,
    term_matrix: TermMatrix | None = None,
    pool: BufferPool | None = None,
) -> CompressedPrompt:
    """Compress ``text`` given its segmentation.

    ``term_matrix`` may be supplied pre-built over ``sentences`` (in order); it is
    only used when no sentence cap applies.
    """
    config = config or CompressionConfig()
    t0 = time.perf_counter()
    input_tokens = estimate_tokens(text)
    if input_tokens <= config.max_tokens:
        return CompressedPrompt(
            text,
            tuple(s.index for s in sentences),
            input_tokens,
            input_tokens,
            1.0,
            time.perf_counter() - t0,
        )
    picks = capped_positions(len(sentences), config)
    if len(picks) != len(sentences):
        sentences = [sentences[i] for i in picks]
        term_matrix = None
    signals = compute_signals(
        sentences,
        depth=config.depth,
        damping=config.damping,
        tol=config.tol,
        max_iter=config.max_iter,
        pool=pool,
        term_matrix=term_matrix,
    )
    scores = composite_rank(signals, config.weights)
    chosen = select(sentences, scores, config)
    out = " ".join(sentences[p].text for p in chosen)
    output_tokens = estimate_tokens(out)
    return CompressedPrompt(
        out,
        tuple(sentences[p].index for p in chosen),
        input_tokens,
        output_tokens,
        output_tokens / input_tokens,
        time.perf_counter() - t0,
    )


def compress(text: str, config: CompressionConfig | None = None, pool: BufferPool | None = None) -> CompressedPrompt:
    """Split, cap, score and select. Empty input yields empty output with ratio 1.0."""
    config = config or CompressionConfig()
    t0 = time.perf_counter()
    if not text:
        return CompressedPrompt("", (), 0, 0, 1.0, 0.0)
    result = compress_sentences(text, split_sentences(text), config, pool=pool)
    return CompressedPrompt(
        result.text,
        result.selected_indices,
        result.input_tokens,
        result.output_tokens,
        result.ratio,
        time.perf_counter() - t0,
    )
