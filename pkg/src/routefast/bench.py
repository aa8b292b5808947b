"""In-process compression benchmark over the synthetic corpus.

One row per requested size: mean input tokens, the largest output, mean
ratio, and p50/mean latency. Latency is wall time of :func:`compress` alone,
without HTTP, so only the algorithm is measured.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .classifiers import ClassifierSuite
from .compression import CompressionConfig, compress
from .corpus import generate_corpus
from .stream import Router, RoutingPolicy

SCHEMA = "routefast.bench/1"
MODES = ("compress", "route")


@dataclass(frozen=True)
class BenchRow:
    tokens: int
    mode: str
    docs: int
    input_tokens: float
    output_tokens: int
    ratio: float
    p50_ms: float
    mean_ms: float


@dataclass
class BenchReport:
    rows: list[BenchRow]
    config: dict = field(default_factory=dict)
    schema: str = SCHEMA

    def to_dict(self) -> dict:
        return {"schema": self.schema, "config": self.config, "rows": [asdict(r) for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def render(self) -> str:
        head = ("Target", "Mode", "Docs", "Input Tokens", "Output Tokens", "Ratio", "p50 ms", "Mean ms")
        body = [
            (str(r.tokens), r.mode, str(r.docs), f"{r.input_tokens:.0f}", str(r.output_tokens),
             f"{100 * r.ratio:.1f}%", f"{r.p50_ms:.2f}", f"{r.mean_ms:.2f}")
            for r in self.rows
        ]
        widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(head)]
        fmt = lambda cells: "  ".join(c.rjust(w) for c, w in zip(cells, widths))  # noqa: E731
        lines = [fmt(head), "  ".join("-" * w for w in widths)]
        lines += [fmt(b) for b in body]
        return "\n".join(lines)


def _measure(mode: str, text: str, config: CompressionConfig, router: Router | None) -> tuple[float, int, int]:
    t0 = time.perf_counter()
    if mode == "compress":
        r = compress(text, config)
        out, inp = r.output_tokens, r.input_tokens
    else:
        d = router.classify(text)
        out, inp = d.eval_tokens, d.input_tokens
    return time.perf_counter() - t0, inp, out


def run_bench(
    sizes: list[int],
    iters: int = 96,
    seed: int = 0,
    config: CompressionConfig | None = None,
    modes: tuple[str, ...] = ("compress",),
    parallel: int = 1,
    warmup: int = 2,
) -> BenchReport:
    """``iters`` documents per size. With ``parallel > 1`` documents are timed on a thread pool;
    the rows do not depend on completion order."""
    config = config or CompressionConfig()
    for m in modes:
        if m not in MODES:
            raise ValueError(f"unknown mode {m!r}; expected one of {MODES}")
    router = Router(RoutingPolicy(compression=config), ClassifierSuite(parallel=False)) if "route" in modes else None
    docs = list(generate_corpus(sizes, iters, seed))
    for d in docs[:warmup]:
        compress(d.text, config)
    rows = []
    for size in sizes:
        texts = [d.text for d in docs if d.target_tokens == size]
        for mode in modes:
            if parallel > 1:
                with ThreadPoolExecutor(parallel) as ex:
                    results = list(ex.map(lambda t: _measure(mode, t, config, router), texts))
            else:
                results = [_measure(mode, t, config, router) for t in texts]
            secs = np.array([r[0] for r in results])
            inp = np.array([r[1] for r in results], dtype=float)
            out = np.array([r[2] for r in results], dtype=float)
            rows.append(BenchRow(
                tokens=size,
                mode=mode,
                docs=len(texts),
                input_tokens=float(inp.mean()),
                output_tokens=int(out.max()),
                ratio=float((out / inp).mean()),
                p50_ms=float(np.median(secs) * 1e3),
                mean_ms=float(secs.mean() * 1e3),
            ))
    return BenchReport(rows, {"sizes": list(sizes), "iters": iters, "seed": seed, "parallel": parallel,
                              "compression": config.to_dict()})
