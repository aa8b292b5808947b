"""Demo routing service over plain HTTP.

Each request body is fed to its own :class:`StreamHandler` as it is read off
the socket, chunk by chunk for ``Transfer-Encoding: chunked`` and in fixed
reads otherwise. The response carries the routing decision; forwarding
upstream goes to an in-process echo sink unless an upstream URL is set.

Endpoints: ``POST /v1/chat/completions``, ``GET /metrics``, ``GET /healthz``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import threading
import urllib.request
from bisect import bisect_left
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Iterable

from .classifiers import GENERAL_DOMAIN, JAILBREAK_THRESHOLD, ClassifierSuite
from .compression import CompressionConfig
from .stream import DONE, Finalize, Forward, RoutingDecision, Router, RoutingPolicy

log = logging.getLogger("routefast.service")

CONFIG_ENV = "ROUTEFAST_CONFIG"
MAX_BODY_BYTES = 10 * 1024 * 1024
SIGNALS = ("jailbreak", "pii", "domain")
STAGES = ("compress", "classify", "total")
MODES = ("passthrough", "classified", "blocked", "rejected", "error")
# seconds
BUCKETS = (0.0005, 0.001, 0.0025, 0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 1.0, 2.5)


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    upstream_url: str | None = None
    compression: CompressionConfig = field(default_factory=CompressionConfig)
    jailbreak_threshold: float = JAILBREAK_THRESHOLD
    metrics_enabled: bool = True
    max_body_bytes: int = MAX_BODY_BYTES
    simulated_latency_ms: float = 0.0
    read_size: int = 64 * 1024

    def __post_init__(self):
        if isinstance(self.compression, dict):
            self.compression = CompressionConfig.from_dict(self.compression)
        if not 0.0 <= self.jailbreak_threshold <= 1.0:
            raise ValueError("jailbreak_threshold must lie in [0, 1]")
        if self.max_body_bytes < 1 or self.read_size < 1:
            raise ValueError("max_body_bytes and read_size must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "ServiceConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["compression"] = self.compression.to_dict()
        return d

    @classmethod
    def load(cls, path: str | None = None, **overrides) -> "ServiceConfig":
        """File named by ``path`` or ``$ROUTEFAST_CONFIG``, then non-None overrides."""
        path = path or os.environ.get(CONFIG_ENV)
        base: dict = {}
        if path:
            with open(path, encoding="utf-8") as f:
                base = json.load(f)
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(base)


# --- metrics -------------------------------------------------------------------


class MetricsRegistry:
    """Counters and stage histograms. One request's increments land atomically."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.extraction = {s: 0 for s in SIGNALS}
        self.match = {s: 0 for s in SIGNALS}
        self.requests = {m: 0 for m in MODES}
        self._buckets = {s: [0] * (len(BUCKETS) + 1) for s in STAGES}
        self._sum = {s: 0.0 for s in STAGES}
        self._count = {s: 0 for s in STAGES}

    def record(self, decision: RoutingDecision | None, mode: str) -> None:
        with self._lock:
            self.requests[mode] += 1
            if decision is None:
                return
            if decision.signals is not None:
                sig = decision.signals
                matched = {
                    "jailbreak": sig.jailbreak.detected,
                    "pii": sig.pii.detected,
                    "domain": sig.domain.label != GENERAL_DOMAIN,
                }
                for s in SIGNALS:
                    self.extraction[s] += 1
                    self.match[s] += int(matched[s])
            for stage, secs in decision.durations.items():
                if stage in self._sum:
                    self._buckets[stage][bisect_left(BUCKETS, secs)] += 1
                    self._sum[stage] += secs
                    self._count[stage] += 1

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "extraction": dict(self.extraction),
                "match": dict(self.match),
                "requests": dict(self.requests),
                "stage_count": dict(self._count),
            }

    def render(self) -> str:
        with self._lock:
            lines = ["# TYPE llm_signal_extraction_total counter"]
            lines += [f'llm_signal_extraction_total{{signal="{s}"}} {self.extraction[s]}' for s in SIGNALS]
            lines.append("# TYPE llm_signal_match_total counter")
            lines += [f'llm_signal_match_total{{signal="{s}"}} {self.match[s]}' for s in SIGNALS]
            lines.append("# TYPE llm_routing_requests_total counter")
            lines += [f'llm_routing_requests_total{{mode="{m}"}} {self.requests[m]}' for m in MODES]
            lines.append("# TYPE llm_stage_duration_seconds histogram")
            for s in STAGES:
                cum = 0
                for le, c in zip(BUCKETS + (float("inf"),), self._buckets[s]):
                    cum += c
                    le_s = "+Inf" if le == float("inf") else repr(le)
                    lines.append(f'llm_stage_duration_seconds_bucket{{stage="{s}",le="{le_s}"}} {cum}')
                lines.append(f'llm_stage_duration_seconds_sum{{stage="{s}"}} {self._sum[s]:.9f}')
                lines.append(f'llm_stage_duration_seconds_count{{stage="{s}"}} {self._count[s]}')
            return "\n".join(lines) + "\n"


# --- upstream sinks ------------------------------------------------------------


class EchoSink:
    """Swallows forwarded bytes and reports how many arrived."""

    def __init__(self) -> None:
        self.received = 0

    def write(self, data: bytes) -> None:
        self.received += len(data)

    def close(self, headers: dict[str, str]) -> dict:
        return {"forwarded_bytes": self.received}


class HttpSink(EchoSink):
    """Buffers the forwarded body and POSTs it to a real upstream."""

    def __init__(self, url: str, timeout: float = 30.0) -> None:
        super().__init__()
        self.url = url
        self.timeout = timeout
        self._parts: list[bytes] = []

    def write(self, data: bytes) -> None:
        super().write(data)
        self._parts.append(data)

    def close(self, headers: dict[str, str]) -> dict:
        req = urllib.request.Request(self.url, data=b"".join(self._parts), method="POST",
                                     headers={"content-type": "application/json", **headers})
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return {"forwarded_bytes": self.received, "upstream_status": resp.status}


# --- request handling independent of the transport -----------------------------


class BodyTooLarge(ValueError):
    pass


class ChunkedDecodeError(ValueError):
    pass


@dataclass
class Response:
    status: int
    body: dict
    headers: dict[str, str] = field(default_factory=dict)

    def encode(self) -> bytes:
        return json.dumps(self.body, sort_keys=True).encode("utf-8")


class RouteService:
    def __init__(self, config: ServiceConfig | None = None) -> None:
        self.config = config or ServiceConfig()
        self.classifiers = ClassifierSuite(self.config.jailbreak_threshold, self.config.simulated_latency_ms)
        self.router = Router(RoutingPolicy(compression=self.config.compression), self.classifiers)
        self.metrics = MetricsRegistry()

    def _sink(self) -> EchoSink:
        return HttpSink(self.config.upstream_url) if self.config.upstream_url else EchoSink()

    def handle_chunks(self, chunks: Iterable[bytes]) -> Response:
        """Route one request whose body arrives as ``chunks``."""
        handler = self.router.handler()
        sink = self._sink()
        final: Finalize | None = None
        total = 0
        try:
            it = iter(chunks)
            pending = next(it, None)
            if pending is None:
                final = handler.on_chunk(b"", True)[-1]
            while pending is not None:
                total += len(pending)
                if total > self.config.max_body_bytes:
                    raise BodyTooLarge(f"body exceeds {self.config.max_body_bytes} bytes")
                nxt = next(it, None)
                for a in handler.on_chunk(pending, nxt is None):
                    if isinstance(a, Forward):
                        sink.write(a.data)
                    elif isinstance(a, Finalize):
                        final = a
                if handler.phase == DONE:
                    break
                pending = nxt
            assert final is not None
            resp = self._respond(final, sink)
        except BodyTooLarge as exc:
            self._record(None, "rejected")
            return Response(413, {"error": "BodyTooLarge", "detail": str(exc)})
        except ChunkedDecodeError as exc:
            self._record(None, "rejected")
            return Response(400, {"error": "MalformedBody", "detail": str(exc)})
        except Exception as exc:  # noqa: BLE001
            log.exception("request failed")
            self._record(None, "error")
            return Response(500, {"error": "internal", "detail": type(exc).__name__})
        self._record(final.decision, self._mode(final.decision))
        return resp

    def handle_body(self, body: bytes, chunk_size: int | None = None) -> Response:
        size = chunk_size or max(1, len(body))
        return self.handle_chunks(body[i : i + size] for i in range(0, len(body), size))

    @staticmethod
    def _mode(d: RoutingDecision) -> str:
        if d.mode == "rejected":
            return "rejected"
        return "blocked" if d.blocked else d.mode

    def _record(self, decision: RoutingDecision | None, mode: str) -> None:
        if self.config.metrics_enabled:
            self.metrics.record(decision, mode)

    def _respond(self, final: Finalize, sink: EchoSink) -> Response:
        d = final.decision
        payload = {
            "selected_model": d.selected_model,
            "mode": d.mode,
            "signals": d.signals.to_dict() if d.signals else None,
            "eval_tokens": d.eval_tokens,
            "durations_ms": {k: v * 1e3 for k, v in d.durations.items()},
        }
        if d.mode == "rejected":
            return Response(400, {"error": "MalformedBody", "detail": d.error, **payload},
                            {"x-routing-mode": d.mode})
        if d.blocked:
            return Response(403, {"error": "blocked", "blocked_by": d.blocked_by, **payload},
                            {"x-routing-mode": "blocked"})
        if final.body:
            sink.write(final.body)
        headers = {"x-selected-model": d.selected_model or "", "x-routing-mode": d.mode}
        payload.update(sink.close({"x-selected-model": d.selected_model or ""}))
        return Response(200, payload, headers)

    def close(self) -> None:
        self.classifiers.close()


# --- HTTP transport ------------------------------------------------------------


def read_chunked(rfile, limit: int) -> Iterable[bytes]:
    """Decode ``Transfer-Encoding: chunked`` lazily, one chunk per item."""
    total = 0
    while True:
        line = rfile.readline(1024)
        if not line.endswith(b"\n"):
            raise ChunkedDecodeError("truncated chunk size line")
        try:
            size = int(line.split(b";", 1)[0].strip(), 16)
        except ValueError:
            raise ChunkedDecodeError(f"bad chunk size {line!r}") from None
        if size == 0:
            while rfile.readline(1024) not in (b"\r\n", b"\n", b""):
                pass  # trailers
            return
        total += size
        if total > limit:
            raise BodyTooLarge(f"body exceeds {limit} bytes")
        data = rfile.read(size)
        if len(data) != size:
            raise ChunkedDecodeError("truncated chunk")
        rfile.readline(4)
        yield data


def read_sized(rfile, length: int, read_size: int) -> Iterable[bytes]:
    left = length
    while left > 0:
        data = rfile.read(min(read_size, left))
        if not data:
            raise ChunkedDecodeError("body shorter than Content-Length")
        left -= len(data)
        yield data


def make_handler(service: RouteService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "routefast"

        def log_message(self, fmt, *args):  # route through logging
            log.debug("%s " + fmt, self.address_string(), *args)

        def _send(self, status: int, body: bytes, ctype: str, headers: dict[str, str] | None = None):
            self.send_response(status)
            self.send_header("content-type", ctype)
            self.send_header("content-length", str(len(body)))
            for k, v in (headers or {}).items():
                self.send_header(k, v)
            self.end_headers()
            self.wfile.write(body)

        def _json(self, resp: Response):
            self._send(resp.status, resp.encode(), "application/json", resp.headers)

        def do_GET(self):
            if self.path == "/healthz":
                self._send(200, b'{"status": "ok"}', "application/json")
            elif self.path == "/metrics":
                self._send(200, service.metrics.render().encode(), "text/plain; version=0.0.4")
            else:
                self._json(Response(404, {"error": "not found"}))

        def do_POST(self):
            if self.path != "/v1/chat/completions":
                self._json(Response(404, {"error": "not found"}))
                return
            cfg = service.config
            te = self.headers.get("transfer-encoding", "").lower()
            if "chunked" in te:
                chunks = read_chunked(self.rfile, cfg.max_body_bytes)
            else:
                length = int(self.headers.get("content-length") or 0)
                if length > cfg.max_body_bytes:
                    service._record(None, "rejected")
                    self.close_connection = True
                    self._json(Response(413, {"error": "BodyTooLarge"}))
                    return
                chunks = read_sized(self.rfile, length, cfg.read_size)
            resp = service.handle_chunks(chunks)
            if resp.status in (400, 403, 413):
                # the rest of the body may be unread
                self.close_connection = True
            self._json(resp)

    return Handler


class RouteServer(ThreadingHTTPServer):
    # the default listen backlog of 5 resets bursts of concurrent clients
    request_queue_size = 128
    daemon_threads = True


def serve(config: ServiceConfig, ready: threading.Event | None = None) -> ThreadingHTTPServer:
    service = RouteService(config)
    server = RouteServer((config.host, config.port), make_handler(service))
    server.service = service  # type: ignore[attr-defined]
    if ready is not None:
        ready.set()
    return server


def add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--upstream-url")
    p.add_argument("--jailbreak-threshold", type=float)
    p.add_argument("--max-body-bytes", type=int)
    p.add_argument("--simulated-latency-ms", type=float)
    p.add_argument("--no-metrics", action="store_true")


def config_from_args(args: argparse.Namespace) -> ServiceConfig:
    return ServiceConfig.load(
        args.config,
        host=args.host,
        port=args.port,
        upstream_url=args.upstream_url,
        jailbreak_threshold=args.jailbreak_threshold,
        max_body_bytes=args.max_body_bytes,
        simulated_latency_ms=args.simulated_latency_ms,
        metrics_enabled=False if args.no_metrics else None,
    )
