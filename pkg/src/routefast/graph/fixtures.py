"""Generator for small encoder graphs in the exported, unfused attention form.

Layer ``i`` is global when ``i % 3 == 2`` and local otherwise, so four layers
read local, local, global, local. Masks are built once, the way exporters
emit them::

    Expand(attention_mask -> [B,1,S,S])  -> Where_2(., 0, -65504)  global mask
    Where_1(band, global mask, -65504)                            local mask

where ``band`` is a constant [1,1,S,S] indicator of the sliding window.
"""

from __future__ import annotations

import numpy as np

from ..attention import F16_MIN, in_window
from .ir import Graph, Initializer, Node, TensorInfo
from .rewrite import window_for


def layer_kinds(layers: int) -> list[str]:
    return ["global" if i % 3 == 2 else "local" for i in range(layers)]


def build_encoder(
    layers: int = 4,
    seq_len: int = 128,
    head_dim: int = 64,
    heads: int = 2,
    batch: int = 1,
    local_window: int = 128,
    seed: int = 0,
    transpose_k: bool = True,
) -> Graph:
    rng = np.random.default_rng(seed)
    B, H, S, d = batch, heads, seq_len, head_dim
    inputs = [TensorInfo("x", (B, H, S, d)), TensorInfo("attention_mask", (B, 1, 1, S))]
    wl, wr = window_for("local", local_window)
    i = np.arange(S)[:, None]
    j = np.arange(S)[None, :]
    band = in_window(i, j, wl, wr).astype(np.float32)[None, None]
    inits = [
        Initializer("mask/band", band),
        Initializer("mask/zero", np.zeros(1, np.float32)),
        Initializer("mask/f16_min", np.full(1, F16_MIN, np.float32)),
        Initializer("attn/scale", np.full(1, 1.0 / np.sqrt(d), np.float32)),
    ]
    nodes = [
        Node("/encoder/mask/Expand", "Expand", ["attention_mask"], ["mask/expanded"], {"shape": [B, 1, S, S]}),
        Node("/encoder/mask/Where_2", "Where", ["mask/expanded", "mask/zero", "mask/f16_min"], ["mask/global"]),
        Node("/encoder/mask/Where_1", "Where", ["mask/band", "mask/global", "mask/f16_min"], ["mask/local"]),
    ]
    h = "x"
    for li, kind in enumerate(layer_kinds(layers)):
        p = f"/layers.{li}/attn"
        for w in ("Wq", "Wk", "Wv", "Wo"):
            inits.append(Initializer(f"layers.{li}.{w}", (rng.standard_normal((d, d)) / np.sqrt(d)).astype(np.float32)))
        mask = "mask/local" if kind == "local" else "mask/global"
        nodes += [
            Node(f"{p}/q_proj/MatMul", "MatMul", [h, f"layers.{li}.Wq"], [f"{p}/q"]),
            Node(f"{p}/k_proj/MatMul", "MatMul", [h, f"layers.{li}.Wk"], [f"{p}/k"]),
            Node(f"{p}/v_proj/MatMul", "MatMul", [h, f"layers.{li}.Wv"], [f"{p}/v"]),
            Node(f"{p}/Mul", "Mul", [f"{p}/q", "attn/scale"], [f"{p}/q_scaled"]),
        ]
        if transpose_k:
            nodes.append(Node(f"{p}/Transpose", "Transpose", [f"{p}/k"], [f"{p}/k_t"], {"perm": [0, 1, 3, 2]}))
        else:
            # K^T projected directly as Wk^T h^T; no Transpose sits on K
            wk = next(x for x in inits if x.name == f"layers.{li}.Wk")
            inits.append(Initializer(f"layers.{li}.WkT", np.ascontiguousarray(wk.data.T)))
            nodes += [
                Node(f"{p}/h_t/Transpose", "Transpose", [h], [f"{p}/h_t"], {"perm": [0, 1, 3, 2]}),
                Node(f"{p}/k_t/MatMul", "MatMul", [f"layers.{li}.WkT", f"{p}/h_t"], [f"{p}/k_t"]),
            ]
        kt = f"{p}/k_t"
        nodes += [
            Node(f"{p}/MatMul", "MatMul", [f"{p}/q_scaled", kt], [f"{p}/scores"]),
            Node(f"{p}/Add", "Add", [f"{p}/scores", mask], [f"{p}/masked"]),
            Node(f"{p}/Softmax", "Softmax", [f"{p}/masked"], [f"{p}/probs"], {"axis": -1}),
            Node(f"{p}/MatMul_1", "MatMul", [f"{p}/probs", f"{p}/v"], [f"{p}/context"]),
            Node(f"{p}/o_proj/MatMul", "MatMul", [f"{p}/context", f"layers.{li}.Wo"], [f"{p}/out"]),
        ]
        h_next = "last_hidden_state" if li == layers - 1 else f"/layers.{li}/hidden"
        nodes.append(Node(f"/layers.{li}/Add", "Add", [h, f"{p}/out"], [h_next]))
        h = h_next
    if layers == 0:
        nodes.append(Node("/Identity", "Identity", ["x"], ["last_hidden_state"]))
    return Graph(inputs, ["last_hidden_state"], nodes, inits).validate()


def random_inputs(graph: Graph, rng: np.random.Generator, max_pad: int | None = None) -> dict[str, np.ndarray]:
    """Normal activations and a right-padded 0/1 ``attention_mask``.

    Padding per batch row is at most ``max_pad`` positions, so under a sliding
    window every query still sees at least one real key when
    ``max_pad <= window_left``.
    """
    out = {}
    for t in graph.inputs:
        if t.name == "attention_mask":
            B, S = t.shape[0], t.shape[-1]
            cap = S - 1 if max_pad is None else min(max_pad, S - 1)
            am = np.ones((B, 1, 1, S), np.float32)
            for b in range(B):
                pad = int(rng.integers(0, cap + 1))
                if pad:
                    am[b, ..., S - pad :] = 0.0
            out[t.name] = am
        else:
            out[t.name] = rng.standard_normal(t.shape).astype(np.float32)
    return out


def manifest_entry(graph: Graph) -> dict:
    ops: dict[str, int] = {}
    for n in graph.nodes:
        ops[n.op] = ops.get(n.op, 0) + 1
    return {"nodes": len(graph.nodes), "initializers": len(graph.initializers), "ops": dict(sorted(ops.items()))}
