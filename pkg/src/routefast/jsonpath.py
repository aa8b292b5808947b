"""Targeted JSON access on raw bytes: field extraction, model rewrite, prefix detection.

Nothing here builds a document tree. The scanner walks the bytes along the
queried path and skips everything else; objects and arrays come back as
:class:`RawSpan` views into the caller's buffer. String values are decoded
only when they are returned.

Skipped containers get a structural check (bracket balance, string
termination, escape syntax); scalars along the walked path are fully
validated. Duplicate keys resolve to the first occurrence.
"""

from __future__ import annotations

import codecs
import json
import re
from dataclasses import dataclass
from typing import Any, Callable, Union

Buffer = Union[bytes, bytearray, memoryview]

WILDCARD = "#"


class MalformedJson(ValueError):
    def __init__(self, msg: str, pos: int = -1):
        super().__init__(f"{msg} at byte {pos}" if pos >= 0 else msg)
        self.pos = pos


class ModelFieldMissing(KeyError):
    pass


class _Incomplete(MalformedJson):
    """The bytes end before the current token does."""


class _Absent:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "ABSENT"

    def __bool__(self) -> bool:
        return False


ABSENT = _Absent()

_WS = re.compile(rb"[ \t\n\r]*")
_STR_BODY = re.compile(rb'[^"\\\x00-\x1f]*(?:\\(?:["\\/bfnrt]|u[0-9a-fA-F]{4})[^"\\\x00-\x1f]*)*')
_PARTIAL_ESC = re.compile(rb"\\(?:u[0-9a-fA-F]{0,3})?")
_NUMBER = re.compile(rb"-?(?:0|[1-9][0-9]*)(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?")
_STRUCT = re.compile(rb'["\[\]{}]')
_LITERALS = {ord("t"): (b"true", True), ord("f"): (b"false", False), ord("n"): (b"null", None)}
_CLOSE = {ord("["): ord("]"), ord("{"): ord("}")}
_QUOTE, _BSLASH = 0x22, 0x5C
_LBRACE, _RBRACE, _LBRACK, _RBRACK = 0x7B, 0x7D, 0x5B, 0x5D
_COLON, _COMMA = 0x3A, 0x2C
_SKIPPABLE = frozenset((_QUOTE, _LBRACE, _LBRACK))


@dataclass(frozen=True)
class FieldQuery:
    segments: tuple[str, ...]

    def __post_init__(self):
        if not self.segments or any(not s for s in self.segments):
            raise ValueError(f"empty path segment in {'.'.join(self.segments)!r}")
        if self.segments.count(WILDCARD) > 1:
            raise ValueError("at most one '#' wildcard per query")

    @classmethod
    def parse(cls, path: "str | FieldQuery") -> "FieldQuery":
        if isinstance(path, FieldQuery):
            return path
        return cls(tuple(path.split(".")))

    def __str__(self) -> str:
        return ".".join(self.segments)


@dataclass(frozen=True)
class RawSpan:
    """An object or array value as a view into the source buffer."""

    buf: memoryview
    start: int
    end: int

    @property
    def view(self) -> memoryview:
        return self.buf[self.start : self.end]

    def __bytes__(self) -> bytes:
        return bytes(self.view)

    def __len__(self) -> int:
        return self.end - self.start

    def value(self) -> Any:
        return json.loads(bytes(self.view))


# --- low-level scanning --------------------------------------------------------


def _ws(buf: Buffer, pos: int) -> int:
    return _WS.match(buf, pos).end()


def _string_end(buf: Buffer, pos: int) -> int:
    """``pos`` is the opening quote; returns the index just past the closing quote."""
    end = _STR_BODY.match(buf, pos + 1).end()
    n = len(buf)
    if end >= n:
        raise _Incomplete("unterminated string", pos)
    if buf[end] == _QUOTE:
        return end + 1
    if buf[end] == _BSLASH and _PARTIAL_ESC.fullmatch(buf, end, n):
        raise _Incomplete("unterminated escape", end)
    raise MalformedJson("bad string character or escape", end)


def _scalar_end(buf: Buffer, pos: int, partial: bool) -> int:
    c = buf[pos]
    lit = _LITERALS.get(c)
    if lit is not None:
        word = lit[0]
        got = bytes(buf[pos : pos + len(word)])
        if got == word:
            return pos + len(word)
        if partial and word.startswith(got) and pos + len(got) == len(buf):
            raise _Incomplete("truncated literal", pos)
        raise MalformedJson("bad literal", pos)
    m = _NUMBER.match(buf, pos)
    if m is None or m.end() == pos:
        if partial and pos + 1 == len(buf) and c == ord("-"):
            raise _Incomplete("truncated number", pos)
        raise MalformedJson(f"unexpected byte {bytes([c])!r}", pos)
    end = m.end()
    if end == len(buf):
        if partial:
            raise _Incomplete("number may continue", pos)
        return end
    if buf[end] in b".eE+-0123456789":
        if partial and _could_continue_number(buf, pos):
            raise _Incomplete("truncated number", pos)
        raise MalformedJson("bad number", pos)
    return end


def _could_continue_number(buf: Buffer, pos: int) -> bool:
    tail = bytes(buf[pos:])
    return re.fullmatch(rb"-?(?:0|[1-9][0-9]*)?(?:\.[0-9]*)?(?:[eE][+-]?[0-9]*)?", tail) is not None


def _container_end(buf: Buffer, pos: int) -> int:
    """Skip a balanced object/array starting at ``pos``."""
    stack = [_CLOSE[buf[pos]]]
    i = pos + 1
    while True:
        m = _STRUCT.search(buf, i)
        if m is None:
            raise _Incomplete("unterminated container", pos)
        i = m.start()
        c = buf[i]
        if c == _QUOTE:
            i = _string_end(buf, i)
        elif c == _LBRACE or c == _LBRACK:
            stack.append(_CLOSE[c])
            i += 1
        else:
            if c != stack[-1]:
                raise MalformedJson("mismatched bracket", i)
            stack.pop()
            i += 1
            if not stack:
                return i


def _value_end(buf: Buffer, pos: int, partial: bool = False) -> int:
    if pos >= len(buf):
        raise _Incomplete("expected a value", pos)
    c = buf[pos]
    if c == _QUOTE:
        return _string_end(buf, pos)
    if c == _LBRACE or c == _LBRACK:
        return _container_end(buf, pos)
    return _scalar_end(buf, pos, partial)


def _decode_string(buf: Buffer, start: int, end: int) -> str:
    raw = bytes(buf[start + 1 : end - 1])
    try:
        if _BSLASH not in raw:
            return raw.decode("utf-8")
        return json.loads(bytes(buf[start:end]))
    except (UnicodeDecodeError, ValueError) as exc:
        raise MalformedJson(f"undecodable string: {exc}", start) from None


def _materialize(buf: Buffer, mv: memoryview, pos: int) -> Any:
    end = _value_end(buf, pos)
    c = buf[pos]
    if c == _QUOTE:
        return _decode_string(buf, pos, end)
    if c == _LBRACE or c == _LBRACK:
        return RawSpan(mv, pos, end)
    lit = _LITERALS.get(c)
    if lit is not None:
        return lit[1]
    text = bytes(buf[pos:end])
    if any(ch in text for ch in b".eE"):
        return float(text)
    return int(text)


def _key_equals(buf: Buffer, start: int, end: int, key: bytes) -> bool:
    raw = buf[start + 1 : end - 1]
    if _BSLASH not in raw:
        return bytes(raw) == key
    return _decode_string(buf, start, end).encode("utf-8") == key


def _members(buf: Buffer, pos: int):
    """Yield (key_start, key_end, value_start) for each member of the object at ``pos``."""
    n = len(buf)
    i = _ws(buf, pos + 1)
    if i < n and buf[i] == _RBRACE:
        return
    while True:
        if i >= n:
            raise _Incomplete("unterminated object", pos)
        if buf[i] != _QUOTE:
            raise MalformedJson("expected a key", i)
        kend = _string_end(buf, i)
        j = _ws(buf, kend)
        if j >= n or buf[j] != _COLON:
            raise MalformedJson("expected ':'", j)
        vstart = _ws(buf, j + 1)
        yield i, kend, vstart
        i = _ws(buf, _value_end(buf, vstart))
        if i >= n:
            raise _Incomplete("unterminated object", pos)
        if buf[i] == _RBRACE:
            return
        if buf[i] != _COMMA:
            raise MalformedJson("expected ',' or '}'", i)
        i = _ws(buf, i + 1)


def _elements(buf: Buffer, pos: int):
    """Yield the start of each element of the array at ``pos``."""
    n = len(buf)
    i = _ws(buf, pos + 1)
    if i < n and buf[i] == _RBRACK:
        return
    while True:
        if i >= n:
            raise _Incomplete("unterminated array", pos)
        yield i
        i = _ws(buf, _value_end(buf, i))
        if i >= n:
            raise _Incomplete("unterminated array", pos)
        if buf[i] == _RBRACK:
            return
        if buf[i] != _COMMA:
            raise MalformedJson("expected ',' or ']'", i)
        i = _ws(buf, i + 1)


def _walk(buf: Buffer, mv: memoryview, pos: int, segs: tuple[str, ...]) -> Any:
    if pos >= len(buf):
        raise _Incomplete("expected a value", pos)
    if not segs:
        return _materialize(buf, mv, pos)
    seg, rest = segs[0], segs[1:]
    c = buf[pos]
    if c == _LBRACE:
        key = seg.encode("utf-8")
        for ks, ke, vs in _members(buf, pos):
            if _key_equals(buf, ks, ke, key):
                return _walk(buf, mv, vs, rest)
        return ABSENT
    if c == _LBRACK:
        if seg == WILDCARD:
            out = []
            for es in _elements(buf, pos):
                v = _walk(buf, mv, es, rest)
                if v is not ABSENT:
                    out.append(v)
            return out
        if not seg.isdigit():
            return ABSENT
        want = int(seg)
        for k, es in enumerate(_elements(buf, pos)):
            if k == want:
                return _walk(buf, mv, es, rest)
        return ABSENT
    _value_end(buf, pos)
    return ABSENT


def _check_trailing(buf: Buffer, end: int) -> None:
    i = _ws(buf, end)
    if i != len(buf):
        raise MalformedJson("trailing data", i)


# --- public operations ---------------------------------------------------------


def extract_field(body: Buffer, query: "str | FieldQuery") -> Any:
    """Value at ``query`` without parsing the rest of the document.

    Returns str, int, float, bool, None (JSON null), a list (for a ``#``
    wildcard), a :class:`RawSpan` for objects/arrays, or :data:`ABSENT`.
    """
    q = FieldQuery.parse(query)
    mv = memoryview(body)
    try:
        start = _ws(body, 0)
        if start >= len(body):
            raise MalformedJson("empty document", 0)
        value = _walk(body, mv, start, q.segments)
        # structural check of the whole document; a skip scan, nothing is materialized
        _check_trailing(body, _value_end(body, start))
        return value
    except _Incomplete as exc:
        raise MalformedJson(f"truncated document ({exc})", exc.pos) from None


def _top_level_span(body: Buffer, key: bytes) -> tuple[int, int] | None:
    start = _ws(body, 0)
    if start >= len(body) or body[start] != _LBRACE:
        raise MalformedJson("top level is not an object", start)
    _check_trailing(body, _value_end(body, start))
    for ks, ke, vs in _members(body, start):
        if _key_equals(body, ks, ke, key):
            return vs, _value_end(body, vs)
    return None


def model_span(body: Buffer) -> tuple[int, int]:
    """Byte span (quotes included) of the top-level model string."""
    try:
        span = _top_level_span(body, b"model")
    except _Incomplete as exc:
        raise MalformedJson(f"truncated document ({exc})", exc.pos) from None
    if span is None:
        raise ModelFieldMissing("model")
    if body[span[0]] != _QUOTE:
        raise ModelFieldMissing("model is not a string")
    return span


def rewrite_model(body: Buffer, new_model: str) -> bytes:
    """Replace the model value in place; every other byte is kept."""
    a, b = model_span(body)
    value = json.dumps(new_model, ensure_ascii=False).encode("utf-8")
    return bytes(body[:a]) + value + bytes(body[b:])


def set_model(body: Buffer, new_model: str) -> bytes:
    """Like :func:`rewrite_model`, but tolerant: a non-string model value is replaced
    and a missing one is inserted as the first member."""
    value = json.dumps(new_model, ensure_ascii=False).encode("utf-8")
    try:
        span = _top_level_span(body, b"model")
    except _Incomplete as exc:
        raise MalformedJson(f"truncated document ({exc})", exc.pos) from None
    if span is not None:
        a, b = span
        return bytes(body[:a]) + value + bytes(body[b:])
    brace = _ws(body, 0)
    inner = _ws(body, brace + 1)
    sep = b"" if body[inner] == _RBRACE else b","
    return bytes(body[: brace + 1]) + b'"model":' + value + sep + bytes(body[brace + 1 :])


# --- prefix detection ----------------------------------------------------------


class _Skip:
    """Resumable skip over one string or container value of a growing buffer."""

    __slots__ = ("start", "stack", "pos", "in_str")

    def __init__(self, buf: Buffer, start: int):
        self.start = start
        c = buf[start]
        self.in_str = c == _QUOTE
        self.stack = [] if self.in_str else [_CLOSE[c]]
        self.pos = start + 1

    def run(self, buf: Buffer) -> int:
        n = len(buf)
        i, stack = self.pos, self.stack
        while True:
            if self.in_str:
                end = _STR_BODY.match(buf, i).end()
                if end >= n or (buf[end] == _BSLASH and _PARTIAL_ESC.fullmatch(buf, end, n)):
                    self.pos = end
                    raise _Incomplete("unterminated string", self.start)
                if buf[end] != _QUOTE:
                    raise MalformedJson("bad string character or escape", end)
                self.in_str = False
                i = end + 1
                if not stack:
                    return i
                continue
            m = _STRUCT.search(buf, i)
            if m is None:
                self.pos = n
                raise _Incomplete("unterminated container", self.start)
            i = m.start()
            c = buf[i]
            if c == _QUOTE:
                self.in_str = True
                i += 1
            elif c == _LBRACE or c == _LBRACK:
                stack.append(_CLOSE[c])
                i += 1
            else:
                if c != stack[-1]:
                    raise MalformedJson("mismatched bracket", i)
                stack.pop()
                i += 1
                if not stack:
                    return i


@dataclass(frozen=True)
class DetectResult:
    kind: str  # specified | auto | unknown | not_json
    model: str | None = None

    @property
    def final(self) -> bool:
        return self.kind != "unknown"

    @classmethod
    def specified(cls, model: str) -> "DetectResult":
        return cls("specified", model)

    def __repr__(self) -> str:
        return f"Specified({self.model!r})" if self.model is not None else self.kind.title().replace("_", "")


AUTO = DetectResult("auto")
UNKNOWN = DetectResult("unknown")
NOT_JSON = DetectResult("not_json")
AUTO_MODEL = "auto"


class PrefixDetector:
    """Model detection over a growing byte prefix.

    Call :meth:`update` with the whole prefix each time (it must extend the
    previous one). Scanning resumes after the last complete top-level member,
    so repeated calls cost roughly the size of the newest member. Once a final
    result is reached it never changes.
    """

    def __init__(self) -> None:
        self.result = UNKNOWN
        self._pos = -1  # -1: object not opened yet
        self._expect_member = False  # just after ',' a key is mandatory
        self._skip: _Skip | None = None

    def update(self, prefix: Buffer) -> DetectResult:
        if self.result.final:
            return self.result
        try:
            self.result = self._scan(prefix)
        except _Incomplete:
            self.result = UNKNOWN
        except MalformedJson:
            self.result = NOT_JSON
        return self.result

    def _scan(self, buf: Buffer) -> DetectResult:
        n = len(buf)
        if self._pos < 0:
            i = _ws(buf, 0)
            if i >= n:
                return UNKNOWN
            if buf[i] != _LBRACE:
                return NOT_JSON
            self._pos = i + 1
        while True:
            i = _ws(buf, self._pos)
            if i >= n:
                return UNKNOWN
            c = buf[i]
            if c == _RBRACE and not self._expect_member:
                return AUTO  # complete object, no model key
            if c != _QUOTE:
                return NOT_JSON
            kend = _string_end(buf, i)
            j = _ws(buf, kend)
            if j >= n:
                return UNKNOWN
            if buf[j] != _COLON:
                return NOT_JSON
            vs = _ws(buf, j + 1)
            if vs >= n:
                return UNKNOWN
            is_model = _key_equals(buf, i, kend, b"model")
            if not is_model and buf[vs] in _SKIPPABLE:
                if self._skip is None or self._skip.start != vs:
                    self._skip = _Skip(buf, vs)
                vend = self._skip.run(buf)
                self._skip = None
            else:
                vend = _value_end(buf, vs, partial=True)
            if is_model:
                if buf[vs] != _QUOTE:
                    return AUTO
                name = _decode_string(buf, vs, vend)
                if not name or name == AUTO_MODEL:
                    return AUTO
                return DetectResult.specified(name)
            k = _ws(buf, vend)
            if k >= n:
                return UNKNOWN
            if buf[k] == _RBRACE:
                return AUTO
            if buf[k] != _COMMA:
                return NOT_JSON
            self._pos = k + 1
            self._expect_member = True


def detect_model_in_prefix(prefix: Buffer) -> DetectResult:
    return PrefixDetector().update(prefix)


# --- streaming string extraction -----------------------------------------------

_ESCAPES = {ord('"'): '"', ord("\\"): "\\", ord("/"): "/", ord("b"): "\b", ord("f"): "\f",
            ord("n"): "\n", ord("r"): "\r", ord("t"): "\t"}
_HEX = frozenset(b"0123456789abcdefABCDEF")


class StreamingFieldExtractor:
    """Push-parser that emits the decoded text of string values at a path, as bytes arrive.

    ``path`` is matched against the container path of each string value, with
    ``#`` matching any array index (e.g. ``("messages", "#", "content")``).
    ``on_text(piece, first)`` gets decoded fragments; ``first`` marks the start of a new
    matched string. The extractor is permissive: it only tracks enough
    structure to know the current path. Anything it cannot follow sets
    :attr:`failed`, and the caller should fall back to a full extraction.
    """

    _VALUE, _AFTER_VALUE, _KEY_OR_END, _KEY, _COLON, _STRING, _ESC, _UNICODE, _SCALAR = range(9)

    def __init__(self, path: tuple[str, ...], on_text: Callable[[str, bool], None]):
        self.path = tuple(path)
        self.on_text = on_text
        self.failed = False
        self.done = False
        self._state = self._VALUE
        self._stack: list[list] = []  # [kind, key_or_index]
        self._key = bytearray()
        self._in_key = False
        self._target = False
        self._decoder = codecs.getincrementaldecoder("utf-8")()
        self._hex = bytearray()
        self._high: int | None = None

    def _current_path_matches(self) -> bool:
        if len(self._stack) != len(self.path):
            return False
        for (kind, label), want in zip(self._stack, self.path):
            if want == WILDCARD:
                if kind != "arr":
                    return False
            elif kind != "obj" or label != want:
                return False
        return True

    def _emit(self, text: str, first: bool = False) -> None:
        if text or first:
            self.on_text(text, first)

    def _flush_high(self) -> str:
        if self._high is None:
            return ""
        ch, self._high = chr(self._high), None
        return ch

    def _value_done(self) -> None:
        if not self._stack:
            self.done = True
        self._state = self._AFTER_VALUE

    def feed(self, data: Buffer) -> None:
        if self.failed or self.done:
            return
        try:
            self._feed(bytes(data))
        except (UnicodeDecodeError, ValueError):
            self.failed = True

    def _feed(self, data: bytes) -> None:
        i, n = 0, len(data)
        while i < n:
            st = self._state
            if st == self._STRING:
                m = _STR_RUN.match(data, i)
                run_end = m.end()
                if run_end > i:
                    chunk = data[i:run_end]
                    if self._in_key:
                        self._key += chunk
                    elif self._target:
                        self._emit(self._flush_high() + self._decoder.decode(chunk))
                    i = run_end
                    continue
                c = data[i]
                i += 1
                if c == _QUOTE:
                    if self._in_key:
                        self._in_key = False
                        self._state = self._COLON
                    else:
                        if self._target:
                            self._emit(self._flush_high() + self._decoder.decode(b"", final=True))
                            self._target = False
                        self._value_done()
                elif c == _BSLASH:
                    if self._in_key:
                        self._key.append(c)
                    self._state = self._ESC
                else:
                    raise ValueError("control character in string")
                continue
            c = data[i]
            i += 1
            if st == self._ESC:
                if self._in_key:
                    self._key.append(c)
                    self._state = self._UNICODE if c == ord("u") else self._STRING
                    self._hex.clear()
                    continue
                if c == ord("u"):
                    self._hex.clear()
                    self._state = self._UNICODE
                    continue
                if c not in _ESCAPES:
                    raise ValueError("bad escape")
                if self._target:
                    self._emit(self._flush_high() + self._decoder.decode(b"", final=True) + _ESCAPES[c])
                self._state = self._STRING
            elif st == self._UNICODE:
                if c not in _HEX:
                    raise ValueError("bad \\u escape")
                if self._in_key:
                    self._key.append(c)
                    self._hex.append(c)
                    if len(self._hex) == 4:
                        self._state = self._STRING
                    continue
                self._hex.append(c)
                if len(self._hex) < 4:
                    continue
                self._state = self._STRING
                cp = int(self._hex, 16)
                if not self._target:
                    continue
                pending = self._decoder.decode(b"", final=True)
                if 0xD800 <= cp < 0xDC00:
                    self._emit(self._flush_high() + pending)
                    self._high = cp
                elif 0xDC00 <= cp < 0xE000 and self._high is not None:
                    pair = 0x10000 + ((self._high - 0xD800) << 10) + (cp - 0xDC00)
                    self._high = None
                    self._emit(pending + chr(pair))
                else:
                    self._emit(self._flush_high() + pending + chr(cp))
            elif c in b" \t\r\n":
                if st == self._SCALAR:
                    self._value_done()
                continue
            elif st == self._VALUE:
                self._start_value(c)
            elif st == self._SCALAR:
                if c in b",]}":
                    self._value_done()
                    i -= 1
            elif st == self._AFTER_VALUE:
                if not self._stack:
                    raise ValueError("trailing data")
                top = self._stack[-1]
                if c == _COMMA:
                    if top[0] == "arr":
                        top[1] += 1
                        self._state = self._VALUE
                    else:
                        self._state = self._KEY
                elif c == _RBRACE and top[0] == "obj" or c == _RBRACK and top[0] == "arr":
                    self._stack.pop()
                    self._value_done()
                else:
                    raise ValueError("expected ',' or closer")
            elif st == self._KEY_OR_END or st == self._KEY:
                if c == _RBRACE and st == self._KEY_OR_END:
                    self._stack.pop()
                    self._value_done()
                elif c == _QUOTE:
                    self._key.clear()
                    self._in_key = True
                    self._state = self._STRING
                else:
                    raise ValueError("expected key")
            elif st == self._COLON:
                if c != _COLON:
                    raise ValueError("expected ':'")
                raw = bytes(self._key)
                self._stack[-1][1] = json.loads(b'"' + raw + b'"') if b"\\" in raw else raw.decode("utf-8")
                self._state = self._VALUE

    def _start_value(self, c: int) -> None:
        if c == _LBRACE:
            self._stack.append(["obj", None])
            self._state = self._KEY_OR_END
        elif c == _LBRACK:
            self._stack.append(["arr", 0])
            self._state = self._VALUE
        elif c == _RBRACK and self._stack and self._stack[-1][0] == "arr" and self._stack[-1][1] == 0:
            # empty array: "[" immediately followed by "]"
            self._stack.pop()
            self._value_done()
        elif c == _QUOTE:
            self._target = self._current_path_matches()
            if self._target:
                self._decoder.reset()
                self._high = None
                self._emit("", first=True)
            self._state = self._STRING
        else:
            self._state = self._SCALAR


_STR_RUN = re.compile(rb'[^"\\\x00-\x1f]*')
