import json
import random

from routefast.classifiers import classify_pii
from routefast.corpus import LAYOUTS, chat_body, generate_corpus, generate_document, luhn_checksum_digit, luhn_valid
from routefast.segmentation import split_sentences


def test_luhn():
    assert luhn_valid("4111111111111111") and not luhn_valid("4111111111111112")
    assert luhn_checksum_digit("411111111111111") == "1"
    assert luhn_valid("4111-1111-1111-1111")


def test_layouts_respect_boundaries():
    assert len(LAYOUTS) == 17
    for lay in LAYOUTS:
        assert [lay[k] for k in lay].count("end") <= 2


def test_document_sizes_and_markers():
    rng = random.Random(0)
    for target in (2000, 4000):
        for lay in LAYOUTS[:6]:
            d = generate_document(target, rng, layout=lay)
            assert target <= d.tokens <= target + 60
            sents = split_sentences(d.text)
            for m in d.markers:
                assert sents[m.sentence].text == m.text
                if m.position == "start":
                    assert m.sentence < 3
                elif m.position == "end":
                    assert m.sentence >= len(sents) - 2
                else:
                    assert 3 <= m.sentence < len(sents) - 2
            if d.marker("pii"):
                assert classify_pii(d.marker("pii").text).detected


def test_corpus_deterministic():
    a = [d.to_dict() for d in generate_corpus([2000], 5, seed=11)]
    b = [d.to_dict() for d in generate_corpus([2000], 5, seed=11)]
    assert a == b and a != [d.to_dict() for d in generate_corpus([2000], 5, seed=12)]


def test_chat_body_shape():
    body = json.loads(chat_body("hi", model="m", model_last=True))
    assert list(body) == ["messages", "stream", "model"] and body["messages"][-1]["content"] == "hi"
