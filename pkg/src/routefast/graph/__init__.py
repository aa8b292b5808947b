"""Graph IR, interpreter and the SDPA to fused-attention rewrite pass."""

from .fixtures import build_encoder, layer_kinds, random_inputs
from .interpreter import ShapeMismatch, UnsupportedOp, interpret
from .ir import Graph, Initializer, Node, SchemaError, TensorInfo, ValidationError, load_graph, parse_graph, save_graph
from .rewrite import NoAttentionMaskInput, UnsupportedHeadDim, dce, find_sdpa_patterns, rewrite, square_tensors
from .verify import VerifyReport, verify_rewrite

__all__ = [
    "Graph", "Initializer", "Node", "TensorInfo", "SchemaError", "ValidationError",
    "load_graph", "parse_graph", "save_graph", "interpret", "ShapeMismatch", "UnsupportedOp",
    "find_sdpa_patterns", "rewrite", "dce", "square_tensors", "UnsupportedHeadDim", "NoAttentionMaskInput",
    "verify_rewrite", "VerifyReport", "build_encoder", "layer_kinds", "random_inputs",
]
