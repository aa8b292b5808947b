"""OpenAI-shaped request bodies with varied formatting, serialized by hand.

The writer records where the top-level model value starts and ends, which is
the reference for byte-span checks.
"""

from __future__ import annotations

import json
import random

WORDS = ["hello", "world", "routing", "model", "auto", "naïve", "東京", "emoji 🚀", 'quote "x"', "back\\slash",
         "tab\tnew\nline", " ", "ctrl\u0001", "slash/"]
MODELS = ["auto", "gpt-x", "m1", "llama-3", "Auto", "", "model with \"quotes\"", "ünïcode-模型", "a/b\\c"]


def _ws(rng: random.Random) -> str:
    return rng.choice(["", "", "", " ", "\n  ", "\t", "  \r\n"])


def _scalar(rng: random.Random, v) -> str:
    return json.dumps(v, ensure_ascii=rng.random() < 0.4)


def _random_value(rng: random.Random, depth: int = 0):
    r = rng.random()
    if depth > 2 or r < 0.35:
        return rng.choice([0, -3, 1.5, 2e10, True, False, None, rng.choice(WORDS)])
    if r < 0.7:
        return [_random_value(rng, depth + 1) for _ in range(rng.randint(0, 3))]
    return {f"k{i}": _random_value(rng, depth + 1) for i in range(rng.randint(0, 3))}


def write(rng: random.Random, v) -> str:
    if isinstance(v, dict):
        if not v:
            return "{" + _ws(rng) + "}"
        parts = [_ws(rng) + _scalar(rng, k) + _ws(rng) + ":" + _ws(rng) + write(rng, x) + _ws(rng) for k, x in v.items()]
        return "{" + ",".join(parts) + "}"
    if isinstance(v, list):
        if not v:
            return "[" + _ws(rng) + "]"
        return "[" + ",".join(_ws(rng) + write(rng, x) + _ws(rng) for x in v) + "]"
    return _scalar(rng, v)


def message(rng: random.Random) -> dict:
    role = rng.choice(["system", "user", "assistant"])
    if rng.random() < 0.25:
        content = [{"type": "text", "text": " ".join(rng.choices(WORDS, k=rng.randint(1, 5)))}
                   for _ in range(rng.randint(1, 3))]
        if rng.random() < 0.3:
            content.append({"type": "image_url", "image_url": {"url": "http://x/y.png"}})
    elif rng.random() < 0.05:
        content = None
    else:
        content = " ".join(rng.choices(WORDS, k=rng.randint(0, 30)))
    m = {"role": role, "content": content}
    if rng.random() < 0.2:
        m["name"] = rng.choice(WORDS)
    return m


def body(rng: random.Random) -> tuple[bytes, dict, tuple[int, int] | None]:
    """(bytes, parsed object, [start, end) byte span of the model value or None)."""
    members: list[tuple[str, object]] = [("messages", [message(rng) for _ in range(rng.randint(1, 6))])]
    if rng.random() < 0.9:
        members.append(("model", rng.choice(MODELS) if rng.random() < 0.92 else rng.choice([None, 3, ["m"]])))
    for key in ("stream", "temperature", "tools", "metadata", "max_tokens"):
        if rng.random() < 0.4:
            members.append((key, _random_value(rng)))
    rng.shuffle(members)
    out = _ws(rng) + "{"
    span = None
    for i, (k, v) in enumerate(members):
        if i:
            out += ","
        out += _ws(rng) + _scalar(rng, k) + _ws(rng) + ":" + _ws(rng)
        start = len(out.encode("utf-8"))
        out += write(rng, v)
        if k == "model":
            span = (start, len(out.encode("utf-8")))
        out += _ws(rng)
    out += "}" + _ws(rng)
    return out.encode("utf-8"), dict(members), span


def corpus(n: int, seed: int = 0) -> list[tuple[bytes, dict, tuple[int, int] | None]]:
    rng = random.Random(seed)
    return [body(rng) for _ in range(n)]
