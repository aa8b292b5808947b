"""Routing fast-path toolkit.

Extractive prompt compression, chunked request-body handling with zero-copy
JSON access, and an attention graph rewrite checked against a tiled
attention reference.
"""

from .compression import CompressedPrompt, CompressionConfig, compress
from .stream import Finalize, Router, RoutingDecision, RoutingPolicy, StreamHandler, replay

__version__ = "0.1.0"

__all__ = [
    "CompressedPrompt", "CompressionConfig", "compress",
    "Finalize", "Router", "RoutingDecision", "RoutingPolicy", "StreamHandler", "replay",
]
