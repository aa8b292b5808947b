"""Chunk-by-chunk request body handling with a routing decision at end of stream.

A request starts in ``init`` and buffers bytes until the prefix says whether
the client named a model. If it did, everything is forwarded untouched
(``passthrough``). If it asked for ``auto``, the body is held back
(``accumulate``) while message text is decoded, split into sentences and
tallied as the chunks arrive, so that at end of stream only scoring,
selection and classification remain.

ext_proc mapping, for readers coming from an Envoy deployment::

    init        request_headers + first request_body chunk(s), CONTINUE withheld
    passthrough body chunks answered with CONTINUE, header mutation only
    accumulate  body chunks answered with an empty body response (buffered)
    done        final chunk answered with a body mutation + routing headers
"""

from __future__ import annotations

import codecs
import dataclasses
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

from .classifiers import ClassifierSuite, Signals
from .compression import CompressionConfig, compress_sentences
from .corpus import DOMAINS
from .jsonpath import (
    ABSENT,
    Buffer,
    MalformedJson,
    PrefixDetector,
    RawSpan,
    StreamingFieldExtractor,
    extract_field,
    set_model,
)
from .segmentation import Sentence, SentenceScanner, estimate_tokens, split_sentences
from .signals import BufferPool, TermMatrix

PREFIX_CAP = 64 * 1024
CONTENT_PATH = ("messages", "#", "content")
MESSAGE_SEPARATOR = "\n"

INIT, PASSTHROUGH, ACCUMULATE, DONE = "init", "passthrough", "accumulate", "done"


class ProtocolError(RuntimeError):
    """A chunk arrived after end of stream."""


class MalformedBody(ValueError):
    pass


# --- actions and decisions -----------------------------------------------------


@dataclass(frozen=True)
class Forward:
    data: bytes


@dataclass(frozen=True)
class Consume:
    size: int


@dataclass(frozen=True)
class RoutingDecision:
    mode: str  # passthrough | classified | rejected
    selected_model: str | None
    signals: Signals | None = None
    eval_text: str | None = None
    eval_tokens: int = 0
    input_tokens: int = 0
    selected_indices: tuple[int, ...] = ()
    blocked_by: str | None = None
    error: str | None = None
    durations: Mapping[str, float] = field(default_factory=dict, compare=False)

    @property
    def blocked(self) -> bool:
        return self.blocked_by is not None or self.mode == "rejected"

    def to_dict(self) -> dict:
        return {
            "selected_model": self.selected_model,
            "mode": self.mode,
            "signals": self.signals.to_dict() if self.signals else None,
            "eval_tokens": self.eval_tokens,
            "input_tokens": self.input_tokens,
            "blocked_by": self.blocked_by,
            "error": self.error,
            "durations_ms": {k: v * 1e3 for k, v in self.durations.items()},
        }


@dataclass(frozen=True)
class Finalize:
    decision: RoutingDecision
    # bytes still owed upstream: the rewritten body when classified, the
    # unforwarded remainder on passthrough, nothing when blocked
    body: bytes


Action = Union[Forward, Consume, Finalize]


# --- incremental text accumulation ---------------------------------------------


class TextAccumulator:
    """Sentence splitting and term tallies that keep up with arriving text.

    ``sentences`` only ever holds finalized sentences; the trailing one stays
    pending until :meth:`flush`, since its terminator may still be arriving.
    """

    def __init__(self) -> None:
        self.scanner = SentenceScanner()
        self.term_matrix = TermMatrix()
        self._decoder = codecs.getincrementaldecoder("utf-8")()
        self._parts: list[str] = []

    @property
    def sentences(self) -> list[Sentence]:
        return self.scanner.sentences

    @property
    def text(self) -> str:
        return "".join(self._parts)

    def ingest_text(self, text: str) -> list[Sentence]:
        if not text:
            return []
        self._parts.append(text)
        new = self.scanner.feed(text)
        for s in new:
            self.term_matrix.add(s.terms)
        return new

    def ingest(self, data: bytes) -> list[Sentence]:
        """UTF-8 bytes; a multibyte character may straddle calls."""
        return self.ingest_text(self._decoder.decode(data))

    def flush(self) -> list[Sentence]:
        tail = self._decoder.decode(b"", final=True)
        new = self.ingest_text(tail)
        rest = self.scanner.flush()
        for s in rest:
            self.term_matrix.add(s.terms)
        return new + rest


def incremental_ingest(acc: TextAccumulator, new_bytes: bytes) -> TextAccumulator:
    acc.ingest(new_bytes)
    return acc


def extract_eval_text(body: Buffer) -> str:
    """Message contents joined with newlines. String content and text parts count."""
    try:
        contents = extract_field(body, "messages.#.content")
    except MalformedJson as exc:
        raise MalformedBody(str(exc)) from None
    if contents is ABSENT or not isinstance(contents, list):
        raise MalformedBody("no messages array")
    texts = []
    for c in contents:
        if isinstance(c, str):
            texts.append(c)
        elif isinstance(c, RawSpan):
            parts = c.value()
            if isinstance(parts, list):
                texts.append("".join(
                    p["text"] for p in parts if isinstance(p, dict) and isinstance(p.get("text"), str)
                ))
    return MESSAGE_SEPARATOR.join(texts)


# --- routing policy ------------------------------------------------------------


def _default_domain_models() -> dict[str, str]:
    return {d: f"{d.replace('_', '-')}-expert" for d in DOMAINS}


@dataclass(frozen=True)
class RoutingPolicy:
    compression: CompressionConfig = field(default_factory=CompressionConfig)
    domain_models: Mapping[str, str] = field(default_factory=_default_domain_models)
    fallback_model: str = "general-assistant"
    block_on_jailbreak: bool = True
    prefix_cap: int = PREFIX_CAP

    def model_for(self, domain: str) -> str:
        return self.domain_models.get(domain, self.fallback_model)


@dataclass
class Router:
    """Shared, stateless-per-request pipeline; hand out one handler per request."""

    policy: RoutingPolicy = field(default_factory=RoutingPolicy)
    classifiers: ClassifierSuite = field(default_factory=ClassifierSuite)
    pool: BufferPool | None = None

    def handler(self) -> "StreamHandler":
        return StreamHandler(self)

    def classify(
        self,
        text: str,
        sentences: Sequence[Sentence] | None = None,
        term_matrix: TermMatrix | None = None,
    ) -> RoutingDecision:
        t0 = time.perf_counter()
        if sentences is None:
            sentences = split_sentences(text)
        result = compress_sentences(text, sentences, self.policy.compression, term_matrix, self.pool)
        t1 = time.perf_counter()
        signals = self.classifiers.run(text, result.text)
        t2 = time.perf_counter()
        blocked = "jailbreak" if self.policy.block_on_jailbreak and signals.jailbreak.detected else None
        return RoutingDecision(
            mode="classified",
            selected_model=None if blocked else self.policy.model_for(signals.domain.label),
            signals=signals,
            eval_text=result.text,
            eval_tokens=result.output_tokens,
            input_tokens=result.input_tokens,
            selected_indices=result.selected_indices,
            blocked_by=blocked,
            durations={"compress": t1 - t0, "classify": t2 - t1},
        )

    def route_body(self, body: bytes) -> Finalize:
        """Whole-body reference path: the decision a streamed request must reproduce."""
        det = PrefixDetector().update(body)
        if det.kind == "specified":
            return Finalize(passthrough_decision(det.model), bytes(body))
        if det.kind != "auto":
            return Finalize(rejected("MalformedBody: not a JSON object"), b"")
        try:
            text = extract_eval_text(body)
        except MalformedBody as exc:
            return Finalize(rejected(f"MalformedBody: {exc}"), b"")
        return self._finish(body, self.classify(text))

    def _finish(self, body: bytes, decision: RoutingDecision) -> Finalize:
        if decision.blocked:
            return Finalize(decision, b"")
        return Finalize(decision, set_model(body, decision.selected_model))


def passthrough_decision(model: str) -> RoutingDecision:
    return RoutingDecision(mode="passthrough", selected_model=model)


def rejected(error: str) -> RoutingDecision:
    return RoutingDecision(mode="rejected", selected_model=None, error=error)


# --- the per-request state machine ---------------------------------------------


class StreamHandler:
    """One request's state. Not thread-safe; many handlers may run side by side.

    ``on_chunk`` returns the actions for that chunk; the last action of the
    stream is always a :class:`Finalize`. A body that cannot be JSON is
    rejected as soon as that is known, after which the caller stops feeding.
    """

    def __init__(self, router: Router | None = None):
        self.router = router or Router()
        self.phase = INIT
        self.chunks = 0
        self.bytes_seen = 0
        self.bytes_forwarded = 0
        self.fallbacks = 0
        self._prefix = bytearray()
        self._body: list[bytes] = []
        self._detector = PrefixDetector()
        self._model: str | None = None
        self._acc: TextAccumulator | None = None
        self._extractor: StreamingFieldExtractor | None = None
        self._strings = 0
        self._t0: float | None = None

    @property
    def accumulated_bytes(self) -> int:
        return sum(len(c) for c in self._body)

    # accumulate-side hooks

    def _on_text(self, piece: str, first: bool) -> None:
        if first:
            if self._strings:
                self._acc.ingest_text(MESSAGE_SEPARATOR)
            self._strings += 1
        self._acc.ingest_text(piece)

    def _start_accumulate(self) -> None:
        self.phase = ACCUMULATE
        self._acc = TextAccumulator()
        self._extractor = StreamingFieldExtractor(CONTENT_PATH, self._on_text)
        data = bytes(self._prefix)
        self._prefix = bytearray()
        self._accumulate(data)

    def _accumulate(self, data: bytes) -> None:
        if data:
            self._body.append(data)
            self._extractor.feed(data)

    def on_chunk(self, chunk: bytes, end_of_stream: bool = False) -> list[Action]:
        if self.phase == DONE:
            raise ProtocolError("chunk received after end of stream")
        if self._t0 is None:
            self._t0 = time.perf_counter()
        chunk = bytes(chunk)
        self.chunks += 1
        self.bytes_seen += len(chunk)
        actions: list[Action] = []

        if self.phase == INIT:
            self._prefix += chunk
            det = self._detector.update(self._prefix)
            if det.kind == "specified":
                self.phase = PASSTHROUGH
                self._model = det.model
                data = bytes(self._prefix)
                self._prefix = bytearray()
                self.bytes_forwarded += len(data)
                actions.append(Forward(data))
            elif det.kind == "auto" or (det.kind == "unknown" and len(self._prefix) >= self.router.policy.prefix_cap):
                self._start_accumulate()
                actions.append(Consume(len(chunk)))
            elif det.kind == "not_json":
                self.phase = DONE
                self._prefix = bytearray()
                actions.append(Finalize(self._stamp(rejected("MalformedBody: not a JSON object")), b""))
                return actions
            else:
                actions.append(Consume(len(chunk)))
        elif self.phase == PASSTHROUGH:
            self.bytes_forwarded += len(chunk)
            actions.append(Forward(chunk))
        else:
            self._accumulate(chunk)
            actions.append(Consume(len(chunk)))

        if end_of_stream:
            actions.append(self._finalize())
        return actions

    def _finalize(self) -> Finalize:
        phase, self.phase = self.phase, DONE
        if phase == PASSTHROUGH:
            return Finalize(self._stamp(passthrough_decision(self._model)), b"")
        if phase == INIT:
            # stream ended while the model was still undecided
            return Finalize(self._stamp(rejected("MalformedBody: truncated JSON")), b"")

        body = b"".join(self._body)
        det = self._detector.update(body)
        if det.kind == "specified":
            # model arrived after the prefix cap forced accumulation
            return Finalize(self._stamp(passthrough_decision(det.model)), body)
        if det.kind != "auto":
            return Finalize(self._stamp(rejected("MalformedBody: not a JSON object")), b"")
        try:
            text = extract_eval_text(body)
        except MalformedBody as exc:
            return Finalize(self._stamp(rejected(f"MalformedBody: {exc}")), b"")

        acc = self._acc
        acc.flush()
        if self._extractor.failed or acc.text != text:
            # the push-extractor could not follow this body; redo from the full text
            self.fallbacks += 1
            decision = self.router.classify(text)
        else:
            decision = self.router.classify(text, acc.sentences, acc.term_matrix)
        return self.router._finish(body, self._stamp(decision))

    def _stamp(self, decision: RoutingDecision) -> RoutingDecision:
        durations = dict(decision.durations)
        durations["total"] = time.perf_counter() - (self._t0 or time.perf_counter())
        return dataclasses.replace(decision, durations=durations)


def on_chunk(state: StreamHandler, chunk: bytes, end_of_stream: bool) -> list[Action]:
    return state.on_chunk(chunk, end_of_stream)


def replay(router: Router, body: bytes, chunk_size: int) -> tuple[list[Action], Finalize]:
    """Feed ``body`` in fixed-size chunks; returns the action trace and the final action."""
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    h = router.handler()
    actions: list[Action] = []
    n = len(body)
    if n == 0:
        actions = h.on_chunk(b"", True)
    for start in range(0, n, chunk_size):
        actions.extend(h.on_chunk(body[start : start + chunk_size], start + chunk_size >= n))
        if h.phase == DONE:
            # early rejection: the rest of the body is not examined
            break
    final = actions[-1]
    assert isinstance(final, Finalize)
    return actions, final


def forwarded_bytes(actions: Sequence[Action]) -> bytes:
    out = b"".join(a.data for a in actions if isinstance(a, Forward))
    last = actions[-1] if actions else None
    if isinstance(last, Finalize):
        out += last.body
    return out
