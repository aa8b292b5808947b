"""Numpy interpreter for the graph IR."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from ..attention import AttentionSpec, flash_attention
from .ir import DTYPES, Graph, Node


class UnsupportedOp(ValueError):
    pass


class ShapeMismatch(ValueError):
    def __init__(self, node: str, msg: str):
        super().__init__(f"node {node!r}: {msg}")
        self.node = node


def _cast(x: np.ndarray, dtype: str) -> np.ndarray:
    return np.asarray(x).astype(DTYPES[dtype], copy=False)


def _result_dtype(*xs: np.ndarray):
    return np.float32 if any(x.dtype == np.float32 for x in xs) else np.float16


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    x64 = x.astype(np.float64)
    m = x64.max(axis=axis, keepdims=True)
    e = np.exp(x64 - m)
    return (e / e.sum(axis=axis, keepdims=True)).astype(x.dtype)


def _run(node: Node, args: list[np.ndarray]) -> list[np.ndarray]:
    op, a = node.op, node.attrs
    if op == "Identity":
        return [args[0]]
    if op in ("Add", "Sub", "Mul"):
        x, y = args
        dt = _result_dtype(x, y)
        f = {"Add": np.add, "Sub": np.subtract, "Mul": np.multiply}[op]
        return [f(x.astype(dt), y.astype(dt))]
    if op == "MatMul":
        x, y = args
        dt = _result_dtype(x, y)
        return [np.matmul(x.astype(np.float64), y.astype(np.float64)).astype(dt)]
    if op == "Softmax":
        return [_softmax(args[0], int(a.get("axis", -1)))]
    if op == "Transpose":
        perm = a.get("perm")
        return [np.transpose(args[0], perm)]
    if op == "Cast":
        return [_cast(args[0], a["to"])]
    if op == "Where":
        cond, x, y = args
        dt = _result_dtype(x, y)
        return [np.where(cond != 0, x.astype(dt), y.astype(dt))]
    if op == "Expand":
        return [np.broadcast_to(args[0], np.broadcast_shapes(args[0].shape, tuple(a["shape"]))).copy()]
    if op == "Constant":
        return [np.asarray(a["data"], dtype=DTYPES[a.get("dtype", "f32")]).reshape(a["shape"])]
    if op == "FusedFlashAttention":
        q, k, v = args[:3]
        pad = args[3] if len(args) > 3 else None
        spec = AttentionSpec(float(a["scale"]), int(a["window_left"]), int(a["window_right"]), pad)
        return [flash_attention(q, k, v, spec, tile=int(a.get("tile", 64)))]
    raise UnsupportedOp(f"node {node.name!r}: op {op!r} is not supported")


def interpret(
    graph: Graph,
    inputs: Mapping[str, np.ndarray],
    return_all: bool = False,
) -> dict[str, np.ndarray]:
    """Run ``graph``; returns the graph outputs, or every tensor when ``return_all``."""
    env: dict[str, np.ndarray] = {}
    for t in graph.inputs:
        if t.name not in inputs:
            raise KeyError(f"graph input {t.name!r} not bound")
        x = _cast(inputs[t.name], t.dtype)
        if tuple(x.shape) != tuple(t.shape):
            raise ShapeMismatch("<input>", f"input {t.name!r} has shape {list(x.shape)}, expected {list(t.shape)}")
        env[t.name] = x
    for init in graph.initializers:
        env[init.name] = init.data
    for node in graph.topological_order():
        args = [env[i] for i in node.inputs if i]
        try:
            outs = _run(node, args)
        except UnsupportedOp:
            raise
        except (ValueError, IndexError, KeyError) as exc:
            raise ShapeMismatch(node.name, str(exc)) from None
        for name, val in zip(node.outputs, outs):
            env[name] = val
    if return_all:
        return env
    return {o: env[o] for o in graph.outputs}
