"""Per-sentence scoring signals: TextRank, U-shaped position, TF-IDF density, novelty.

All four work from raw term counts. The sentence-by-term count matrix is sparse
(CSR); the TextRank similarity matrix is dense and lives in a flat buffer
checked out of a :class:`BufferPool`, so repeated calls stop allocating the
n*n block once the pool is warm.
"""

from __future__ import annotations

import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy import sparse

from .segmentation import Sentence
from .terms import TermVector, cosine  # noqa: F401  (re-exported)

DAMPING = 0.85
TOLERANCE = 1e-6
MAX_ITER = 100


class BufferPool:
    """Thread-safe pool of flat float64 buffers.

    A checked-out buffer belongs to one caller until the ``with`` block exits.
    """

    def __init__(self, max_free: int = 8):
        self._lock = threading.Lock()
        self._free: list[np.ndarray] = []
        self.max_free = max_free
        self.allocations = 0

    @contextmanager
    def checkout(self, size: int) -> Iterator[np.ndarray]:
        buf = None
        with self._lock:
            best = -1
            for i, cand in enumerate(self._free):
                if cand.size >= size and (best < 0 or cand.size < self._free[best].size):
                    best = i
            if best >= 0:
                buf = self._free.pop(best)
            else:
                self.allocations += 1
        if buf is None:
            buf = np.empty(max(size, 1), dtype=np.float64)
        try:
            yield buf[:size]
        finally:
            with self._lock:
                if len(self._free) < self.max_free:
                    self._free.append(buf)


DEFAULT_POOL = BufferPool()


@dataclass
class SignalScores:
    textrank: np.ndarray
    position: np.ndarray
    tfidf: np.ndarray
    novelty: np.ndarray

    def __len__(self) -> int:
        return len(self.position)

    def as_tuple(self) -> tuple[np.ndarray, ...]:
        return (self.textrank, self.position, self.tfidf, self.novelty)


class TermMatrix:
    """Sentence-by-term count matrix with a growable vocabulary.

    Rows can be appended one sentence at a time, which is how the streaming
    accumulator builds it while the body is still arriving.
    """

    def __init__(self) -> None:
        self.vocab: dict[str, int] = {}
        self._indptr = [0]
        self._indices: list[int] = []
        self._data: list[float] = []
        self.df: list[int] = []
        self.norms: list[float] = []

    @classmethod
    def from_sentences(cls, sentences: Sequence[Sentence]) -> "TermMatrix":
        tm = cls()
        for s in sentences:
            tm.add(s.terms)
        return tm

    @property
    def n_rows(self) -> int:
        return len(self._indptr) - 1

    def add(self, tv: TermVector) -> None:
        vocab = self.vocab
        for term, count in tv.counts.items():
            j = vocab.get(term)
            if j is None:
                j = vocab[term] = len(vocab)
                self.df.append(0)
            self.df[j] += 1
            self._indices.append(j)
            self._data.append(float(count))
        self._indptr.append(len(self._indices))
        self.norms.append(tv.norm)

    def csr(self) -> sparse.csr_matrix:
        return sparse.csr_matrix(
            (
                np.asarray(self._data, dtype=np.float64),
                np.asarray(self._indices, dtype=np.int64),
                np.asarray(self._indptr, dtype=np.int64),
            ),
            shape=(self.n_rows, max(len(self.vocab), 1)),
        )


def _matrix(sentences: Sequence[Sentence], tm: TermMatrix | None) -> tuple[sparse.csr_matrix, np.ndarray, TermMatrix]:
    if tm is None or tm.n_rows != len(sentences):
        tm = TermMatrix.from_sentences(sentences)
    return tm.csr(), np.asarray(tm.norms, dtype=np.float64), tm


def textrank(
    sentences: Sequence[Sentence],
    damping: float = DAMPING,
    tol: float = TOLERANCE,
    max_iter: int = MAX_ITER,
    pool: BufferPool | None = None,
    term_matrix: TermMatrix | None = None,
) -> np.ndarray:
    """PageRank over the cosine-similarity graph; scores sum to 1."""
    n = len(sentences)
    if n == 0:
        return np.zeros(0)
    if n == 1:
        return np.ones(1)
    pool = pool or DEFAULT_POOL
    X, norms, _ = _matrix(sentences, term_matrix)
    inv_norm = np.divide(1.0, norms, out=np.zeros(n), where=norms > 0)
    with pool.checkout(n * n) as flat:
        W = flat.reshape(n, n)
        W.fill(0.0)
        # csr toarray accumulates into ``out``
        (X @ X.T).toarray(out=W)
        W *= inv_norm[:, None]
        W *= inv_norm[None, :]
        np.fill_diagonal(W, 0.0)
        np.clip(W, 0.0, 1.0, out=W)
        return pagerank(W, damping, tol, max_iter, pool)


def pagerank(
    W: np.ndarray,
    damping: float = DAMPING,
    tol: float = TOLERANCE,
    max_iter: int = MAX_ITER,
    pool: BufferPool | None = None,
) -> np.ndarray:
    """Power iteration on a non-negative weight matrix; zero rows jump uniformly."""
    n = W.shape[0]
    pool = pool or DEFAULT_POOL
    out_weight = W.sum(axis=1)
    dangling = out_weight <= 0.0
    inv_out = np.divide(1.0, out_weight, out=np.zeros(n), where=~dangling)
    base = (1.0 - damping) / n
    with pool.checkout(3 * n) as vec:
        r, nxt, tmp = vec[:n], vec[n : 2 * n], vec[2 * n :]
        r.fill(1.0 / n)
        for _ in range(max_iter):
            np.multiply(r, inv_out, out=tmp)
            np.dot(W.T, tmp, out=nxt)
            nxt += r[dangling].sum() / n
            nxt *= damping
            nxt += base
            np.subtract(nxt, r, out=tmp)
            delta = float(np.abs(tmp, out=tmp).sum())
            r[:] = nxt
            if delta < tol:
                break
        return r.copy()


def position_weights(n: int, depth: float) -> np.ndarray:
    """U-shaped weight 1 - depth * sin(pi * i / (n - 1)); edges are 1.0."""
    if not 0.0 <= depth <= 1.0:
        raise ValueError("depth must lie in [0, 1]")
    if n <= 0:
        return np.zeros(0)
    if n == 1:
        return np.ones(1)
    i = np.arange(n)
    # sin(pi - x) == sin(x); folding keeps the curve exactly symmetric and the endpoints at 1.0
    m = np.minimum(i, n - 1 - i).astype(np.float64)
    return 1.0 - depth * np.sin(np.pi * m / (n - 1))


def idf_weights(df: np.ndarray, n: int) -> np.ndarray:
    return np.log((1.0 + n) / (1.0 + df)) + 1.0


def tfidf_scores(sentences: Sequence[Sentence], term_matrix: TermMatrix | None = None) -> np.ndarray:
    """Mean of tf * idf over each sentence's distinct terms (smoothed idf)."""
    n = len(sentences)
    if n == 0:
        return np.zeros(0)
    X, _, tm = _matrix(sentences, term_matrix)
    idf = idf_weights(np.asarray(tm.df, dtype=np.float64), n) if tm.df else np.zeros(1)
    totals = X @ idf
    nnz = np.diff(X.indptr)
    return np.divide(totals, nnz, out=np.zeros(n), where=nnz > 0)


def novelty_scores(sentences: Sequence[Sentence], term_matrix: TermMatrix | None = None) -> np.ndarray:
    """1 - cos(tf_i, mean tf vector)."""
    n = len(sentences)
    if n == 0:
        return np.zeros(0)
    X, norms, _ = _matrix(sentences, term_matrix)
    centroid = np.asarray(X.sum(axis=0)).ravel() / n
    c_norm = math.sqrt(float(centroid @ centroid))
    if c_norm == 0.0:
        return np.ones(n)
    dots = X @ centroid
    denom = norms * c_norm
    cos = np.divide(dots, denom, out=np.zeros(n), where=denom > 0)
    return np.clip(1.0 - cos, 0.0, 1.0)


def compute_signals(
    sentences: Sequence[Sentence],
    depth: float = 0.5,
    damping: float = DAMPING,
    tol: float = TOLERANCE,
    max_iter: int = MAX_ITER,
    pool: BufferPool | None = None,
    term_matrix: TermMatrix | None = None,
) -> SignalScores:
    if term_matrix is None or term_matrix.n_rows != len(sentences):
        term_matrix = TermMatrix.from_sentences(sentences)
    return SignalScores(
        textrank=textrank(sentences, damping, tol, max_iter, pool, term_matrix),
        position=position_weights(len(sentences), depth),
        tfidf=tfidf_scores(sentences, term_matrix),
        novelty=novelty_scores(sentences, term_matrix),
    )
