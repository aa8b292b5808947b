import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from routefast.compression import max_normalize
from routefast.segmentation import split_sentences
from routefast.signals import (
    BufferPool,
    TermMatrix,
    compute_signals,
    novelty_scores,
    pagerank,
    position_weights,
    textrank,
    tfidf_scores,
)
from routefast.terms import TermVector, cosine, tokenize_terms

# Values below come from a separate pure-python implementation (dict-based
# cosine, loop PageRank with the same stopping rule, hand TF-IDF/centroid).
FIVE = "The cat sat on the mat. The dog sat on the log. Cats and dogs are pets. The mat is red. Quantum flux capacitors hum."
TEXTRANK_FIVE = [0.35085838361888966, 0.30593479896524056, 0.04545454552040741, 0.2522977263750555, 0.04545454552040741]
FOUR = "Alpha beta gamma. Alpha beta delta. Alpha epsilon. Zeta zeta alpha."
TFIDF_FOUR = [1.4757054518800485, 1.4757054518800485, 1.4581453659370776, 2.416290731874155]
THREE = ["red apple", "red apple pie", "blue sky"]
NOVELTY_THREE = [0.14719713457755845, 0.12961172022151102, 0.5735985672887792]


def tv(**counts):
    return TermVector.from_counts(counts)


def test_cosine_examples():
    a = tv(a=1, b=1)
    assert cosine(a, a) == 1.0
    assert cosine(a, tv(c=2)) == 0.0
    assert cosine(a, tv(a=1)) == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    assert cosine(tv(), a) == 0.0


def test_term_vector():
    v = TermVector.from_text("The THE the, cat!")
    assert dict(v.counts) == {"the": 3, "cat": 1}
    assert v.norm == pytest.approx(math.sqrt(10))
    assert tokenize_terms("«Hello», world...") == ["hello", "world"]
    assert TermVector.from_text("...").norm == 0.0


def test_textrank_oracle():
    got = textrank(split_sentences(FIVE))
    np.testing.assert_allclose(got, TEXTRANK_FIVE, rtol=0, atol=1e-9)
    assert got.sum() == pytest.approx(1.0, abs=1e-12)


def test_textrank_trivial():
    assert textrank(split_sentences("Only one.")).tolist() == [1.0]
    np.testing.assert_allclose(textrank(split_sentences("Same words. Same words. Same words.")), [1 / 3] * 3, atol=1e-12)


def test_textrank_close_to_exact_stationary():
    # dense eigenvector of the Google matrix, for a looser sanity bound
    sents = split_sentences(FIVE)
    X = np.array([[s.terms.counts.get(t, 0) for t in sorted({t for x in sents for t in x.terms.counts})] for s in sents], float)
    W = (X @ X.T) / np.outer(np.linalg.norm(X, axis=1), np.linalg.norm(X, axis=1))
    np.fill_diagonal(W, 0)
    n = len(W)
    P = np.where(W.sum(1, keepdims=True) > 0, W / np.maximum(W.sum(1, keepdims=True), 1e-300), 1.0 / n)
    G = 0.85 * P + 0.15 / n
    vals, vecs = np.linalg.eig(G.T)
    r = np.real(vecs[:, np.argmax(np.real(vals))])
    r /= r.sum()
    np.testing.assert_allclose(textrank(sents), r, atol=1e-5)


def test_pagerank_scale_invariant():
    rng = np.random.default_rng(0)
    W = rng.random((7, 7))
    np.fill_diagonal(W, 0)
    np.testing.assert_allclose(pagerank(W), pagerank(W * 13.7), atol=1e-12)


def test_position_weights():
    assert position_weights(3, 0.5).tolist() == [1.0, 0.5, 1.0]
    assert position_weights(9, 0.0).tolist() == [1.0] * 9
    assert position_weights(1, 0.7).tolist() == [1.0]
    np.testing.assert_allclose(position_weights(5, 1.0), [1.0, 0.29289321881345254, 0.0, 0.29289321881345254, 1.0],
                               atol=1e-15)
    with pytest.raises(ValueError):
        position_weights(4, 1.5)


def test_tfidf_oracle():
    np.testing.assert_allclose(tfidf_scores(split_sentences(FOUR)), TFIDF_FOUR, rtol=0, atol=1e-9)


def test_tfidf_examples():
    (s,) = tfidf_scores(split_sentences("one two three"))
    assert s > 0
    sc = tfidf_scores(split_sentences("common words here. common words here. common words unique."))
    assert sc[2] > sc[0]


def test_novelty_oracle():
    sents = split_sentences("\n".join(THREE))
    np.testing.assert_allclose(novelty_scores(sents), NOVELTY_THREE, rtol=0, atol=1e-9)


def test_novelty_examples():
    assert novelty_scores(split_sentences("Same thing. Same thing. Same thing.")).tolist() == pytest.approx([0, 0, 0],
                                                                                                          abs=1e-12)
    s = novelty_scores(split_sentences("a b c. a b c. a b c. a b c. x y z."))
    assert s.argmax() == 4 and s[4] > s[:4].max()


def test_buffer_pool_reuse_and_exclusive():
    pool = BufferPool()
    with pool.checkout(100) as a:
        with pool.checkout(100) as b:
            assert not np.shares_memory(a, b)
    assert pool.allocations == 2
    sents = split_sentences(FIVE * 4)
    textrank(sents, pool=pool)
    warm = pool.allocations
    for _ in range(5):
        textrank(sents, pool=pool)
    assert pool.allocations == warm


def test_streamed_term_matrix_matches_from_scratch():
    sents = split_sentences(FIVE)
    tm = TermMatrix()
    for s in sents:
        tm.add(s.terms)
    a = compute_signals(sents, term_matrix=tm)
    b = compute_signals(sents)
    for x, y in zip(a.as_tuple(), b.as_tuple()):
        np.testing.assert_array_equal(x, y)


@given(st.integers(1, 200), st.floats(0, 1))
def test_position_symmetric_bounded(n, d):
    w = position_weights(n, d)
    assert w[0] == 1.0 and w[-1] == 1.0
    np.testing.assert_array_equal(w, w[::-1])
    assert np.all((w >= 1 - d - 1e-12) & (w <= 1.0))


words = st.sampled_from(["alpha", "beta", "gamma", "delta", "x", "的", "!!", "..."])
docs = st.lists(st.lists(words, min_size=0, max_size=8).map(" ".join), min_size=1, max_size=25).map(
    lambda xs: " ".join(x + "." for x in xs))


@given(docs)
def test_signals_finite_and_normalizable(text):
    sents = split_sentences(text)
    if not sents:
        return
    sig = compute_signals(sents)
    for arr in sig.as_tuple():
        assert len(arr) == len(sents) and np.all(np.isfinite(arr))
        norm = max_normalize(arr)
        assert np.all((norm >= 0) & (norm <= 1))
        if arr.max() > 0:
            assert norm.max() == 1.0 and norm.argmax() == arr.argmax()
    assert np.all((sig.novelty >= 0) & (sig.novelty <= 1))
    assert sig.textrank.sum() == pytest.approx(1.0, abs=1e-9)


@given(st.dictionaries(st.sampled_from("abcdef"), st.integers(1, 5)),
       st.dictionaries(st.sampled_from("abcdef"), st.integers(1, 5)))
def test_cosine_symmetric_bounded(a, b):
    x, y = TermVector.from_counts(a), TermVector.from_counts(b)
    c = cosine(x, y)
    assert c == pytest.approx(cosine(y, x), abs=1e-15)
    assert 0.0 <= c <= 1.0
