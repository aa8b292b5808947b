import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import bodies
from routefast.corpus import chat_body, generate_document
from routefast.segmentation import split_sentences
from routefast.signals import TermMatrix
from routefast.stream import (
    Consume,
    Finalize,
    Forward,
    ProtocolError,
    Router,
    RoutingPolicy,
    StreamHandler,
    TextAccumulator,
    extract_eval_text,
    forwarded_bytes,
    incremental_ingest,
    replay,
)

ROUTER = Router()


def doc_body(tokens=3000, seed=0, model="auto", **kw):
    d = generate_document(tokens, random.Random(seed))
    return d, chat_body(d.text, model=model, **kw)


def test_passthrough_single_chunk():
    body = chat_body("hello", model="m1")
    h = ROUTER.handler()
    actions = h.on_chunk(body, True)
    assert isinstance(actions[0], Forward) and actions[0].data == body
    fin = actions[-1]
    assert isinstance(fin, Finalize) and fin.decision.mode == "passthrough"
    assert fin.decision.selected_model == "m1" and fin.decision.signals is None
    assert h.accumulated_bytes == 0


def test_auto_chunked_classifies():
    doc, body = doc_body(4000, 1)
    actions, fin = replay(ROUTER, body, 1024)
    assert all(isinstance(a, Consume) for a in actions[:-1])
    d = fin.decision
    assert d.mode == "classified" and d.eval_tokens <= 512
    if not d.blocked:
        # upstream gets the original content with only the model replaced
        sent = json.loads(fin.body)
        assert sent["messages"][-1]["content"] == doc.text
        assert sent["model"] == d.selected_model


def test_model_after_prefix_cap():
    text = "word " * 30000
    body = json.dumps({"messages": [{"role": "user", "content": text}], "model": "late-model"}).encode()
    actions, fin = replay(ROUTER, body, 4096)
    assert fin.decision.mode == "passthrough" and fin.decision.selected_model == "late-model"
    assert forwarded_bytes(actions) == body


def test_not_json_rejected_early():
    h = ROUTER.handler()
    actions = h.on_chunk(b"--boundary\r\n", False)
    assert isinstance(actions[-1], Finalize) and actions[-1].decision.mode == "rejected"
    with pytest.raises(ProtocolError):
        h.on_chunk(b"more", True)


def test_truncated_and_bad_messages_rejected():
    _, fin = replay(ROUTER, b'{"model":"auto","messages":[{"content":"x"', 5)
    assert fin.decision.mode == "rejected" and fin.body == b""
    _, fin = replay(ROUTER, b'{"model":"auto","messages":3}', 5)
    assert fin.decision.mode == "rejected"
    _, fin = replay(ROUTER, b'{"model":"', 3)
    assert fin.decision.mode == "rejected"


def test_jailbreak_is_blocked():
    d = generate_document(2000, random.Random(5), layout={"jailbreak": "start", "pii": None, "question": "end"})
    _, fin = replay(ROUTER, chat_body(d.text), 512)
    assert fin.decision.blocked_by == "jailbreak" and fin.body == b""
    lenient = Router(RoutingPolicy(block_on_jailbreak=False))
    _, fin = replay(lenient, chat_body(d.text), 512)
    assert not fin.decision.blocked and fin.decision.signals.jailbreak.detected


def test_eval_text_joins_messages():
    body = json.dumps({"model": "auto", "messages": [
        {"role": "system", "content": "Sys."},
        {"role": "user", "content": [{"type": "text", "text": "a"}, {"type": "image_url"}, {"type": "text", "text": "b"}]},
        {"role": "user", "content": "Last."}]}).encode()
    assert extract_eval_text(body) == "Sys.\nab\nLast."


def test_incremental_ingest_example():
    acc = TextAccumulator()
    incremental_ingest(acc, b"A. B")
    assert [s.text for s in acc.sentences] == ["A."]
    incremental_ingest(acc, b". C.")
    acc.flush()
    assert [s.text for s in acc.sentences] == ["A.", "B.", "C."]


def test_incremental_utf8_split():
    text = "Größe 東京です。 Ünïcödé sentence. Emoji 🚀 here! End"
    raw = text.encode()
    for cut in range(len(raw) + 1):
        acc = TextAccumulator()
        acc.ingest(raw[:cut])
        acc.ingest(raw[cut:])
        acc.flush()
        assert acc.text == text
        assert acc.sentences == split_sentences(text)


@given(st.lists(st.integers(0, 400), max_size=8), st.integers(0, 10))
@settings(max_examples=50)
def test_incremental_matches_from_scratch(cuts, seed):
    text = generate_document(200, random.Random(seed)).text
    raw = text.encode()
    acc = TextAccumulator()
    prev = 0
    for c in sorted(min(c, len(raw)) for c in cuts) + [len(raw)]:
        acc.ingest(raw[prev:c])
        prev = c
    acc.flush()
    sents = split_sentences(text)
    assert acc.sentences == sents
    ref = TermMatrix.from_sentences(sents)
    assert acc.term_matrix.vocab == ref.vocab and acc.term_matrix.df == ref.df
    assert (acc.term_matrix.csr() != ref.csr()).nnz == 0


def test_streamed_equals_buffered_on_mixed_bodies():
    cases = [b for b, _, _ in bodies.corpus(40, seed=9)]
    cases += [doc_body(1500, s, model=m, model_last=s % 2 == 1)[1] for s in range(6) for m in ("auto", "m2")]
    for body in cases:
        ref = ROUTER.route_body(body)
        for size in (1, 7, 1024, 65536):
            actions, fin = replay(ROUTER, body, size)
            assert fin.decision == ref.decision, (body[:80], size)
            if ref.decision.mode == "passthrough":
                assert forwarded_bytes(actions) == body
            elif ref.decision.mode == "classified":
                assert fin.body == ref.body


def test_passthrough_zero_accumulation():
    body = chat_body("x " * 5000, model="m1")
    h = StreamHandler(ROUTER)
    for i in range(0, len(body), 100):
        for a in h.on_chunk(body[i:i + 100], i + 100 >= len(body)):
            if isinstance(a, Forward):
                assert a.data == body[i:i + 100] or i == 0
        assert h.accumulated_bytes == 0
    assert h.bytes_forwarded == len(body) == h.bytes_seen


def test_replay_validates_chunk_size():
    with pytest.raises(ValueError):
        replay(ROUTER, b"{}", 0)
    _, fin = replay(ROUTER, b"", 4)
    assert fin.decision.mode == "rejected"
