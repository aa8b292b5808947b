"""Attention fusion pass.

Finds the exported scaled-dot-product chain::

    Mul(Q, scale) -> MatMul(., Transpose(K)) -> Add(., mask) -> Softmax(last axis) -> MatMul(., V)

and replaces each occurrence with a single ``FusedFlashAttention`` node. The
2-D additive mask is replaced by one shared 1-D padding bias computed from the
``attention_mask`` graph input, ``-65504 * (1 - attention_mask)`` cast to
f16, and each layer's window comes from the mask producer's name: ``Where_1``
marks the sliding-window (local) mask, ``Where_2`` the global one. A node
attribute ``layer_kind`` overrides the name heuristic. Dead mask
construction is then removed by :func:`dce`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from ..attention import F16_MIN, SUPPORTED_HEAD_DIMS
from .ir import Graph, Initializer, Node, infer_shapes

_LOCAL_TAG = re.compile(r"Where_1(?!\d)")
_GLOBAL_TAG = re.compile(r"Where_2(?!\d)")
# ops the mask may pass through on its way from the tagged Where to the Add
_MASK_PASSTHROUGH = {"Cast", "Identity", "Expand"}

MASK_INPUT = "attention_mask"
PAD_BIAS = "pad_bias"


class UnsupportedHeadDim(ValueError):
    pass


class NoAttentionMaskInput(ValueError):
    pass


@dataclass(frozen=True)
class PatternMatch:
    scale_mul: str
    qk_matmul: str
    mask_add: str
    softmax: str
    av_matmul: str
    q: str
    k: str
    v: str
    mask: str
    kind: str  # local | global
    scale: float
    k_transposed: bool  # K reached the QK MatMul through a Transpose node

    @property
    def nodes(self) -> tuple[str, ...]:
        return (self.scale_mul, self.qk_matmul, self.mask_add, self.softmax, self.av_matmul)


def window_for(kind: str, local_window: int) -> tuple[int, int]:
    """(window_left, window_right). An even local window w splits as w/2 - 1 behind, w/2 ahead."""
    if kind == "global":
        return -1, -1
    return local_window // 2 - 1, local_window // 2


def _scalar(graph: Graph, name: str, producers: dict[str, Node]) -> float | None:
    inits = graph.initializer_map()
    if name in inits:
        data = inits[name].data
    elif name in producers and producers[name].op == "Constant":
        data = np.asarray(producers[name].attrs["data"])
    else:
        return None
    if data.size != 1:
        return None
    return float(data.ravel()[0])


def _layer_kind(mask: str, producers: dict[str, Node]) -> str | None:
    name = mask
    for _ in range(8):
        node = producers.get(name)
        if node is None:
            return None
        kind = node.attrs.get("layer_kind")
        if kind in ("local", "global"):
            return kind
        if node.op == "Where":
            if _LOCAL_TAG.search(node.name):
                return "local"
            if _GLOBAL_TAG.search(node.name):
                return "global"
            return None
        if node.op not in _MASK_PASSTHROUGH:
            return None
        name = node.inputs[0]
    return None


def _is_last_axis(node: Node, rank: int) -> bool:
    axis = int(node.attrs.get("axis", -1))
    return axis == -1 or axis == rank - 1


def find_sdpa_patterns(graph: Graph) -> list[PatternMatch]:
    producers = graph.producers()
    consumers = graph.consumers()
    shapes = infer_shapes(graph)
    used: set[str] = set()
    matches: list[PatternMatch] = []

    for sm in graph.topological_order():
        if sm.op != "Softmax" or not _is_last_axis(sm, len(shapes[sm.inputs[0]].shape)):
            continue
        add = producers.get(sm.inputs[0])
        if add is None or add.op != "Add":
            continue
        qk = mask = None
        for a, b in ((0, 1), (1, 0)):
            p = producers.get(add.inputs[a])
            if p is not None and p.op == "MatMul":
                qk, mask = p, add.inputs[b]
                break
        if qk is None:
            continue
        mul = producers.get(qk.inputs[0])
        if mul is None or mul.op != "Mul":
            continue
        q = scale = None
        for a, b in ((0, 1), (1, 0)):
            s = _scalar(graph, mul.inputs[b], producers)
            if s is not None:
                q, scale = mul.inputs[a], s
                break
        if q is None or not scale > 0:
            continue
        k_src = qk.inputs[1]
        kt = producers.get(k_src)
        k_transposed = False
        if kt is not None and kt.op == "Transpose":
            rank = len(shapes[kt.inputs[0]].shape)
            perm = list(kt.attrs.get("perm", range(rank)[::-1]))
            if perm == list(range(rank - 2)) + [rank - 1, rank - 2]:
                k_src, k_transposed = kt.inputs[0], True
        avs = [c for c in consumers.get(sm.outputs[0], []) if c.op == "MatMul" and c.inputs[0] == sm.outputs[0]]
        if len(avs) != 1:
            continue
        av = avs[0]
        kind = _layer_kind(mask, producers) or sm.attrs.get("layer_kind")
        if kind not in ("local", "global"):
            continue
        m = PatternMatch(mul.name, qk.name, add.name, sm.name, av.name, q, k_src, av.inputs[1], mask, kind,
                         scale, k_transposed)
        if used.intersection(m.nodes):
            continue
        used.update(m.nodes)
        matches.append(m)
    return matches


def _fresh(name: str, taken: set[str]) -> str:
    if name not in taken:
        taken.add(name)
        return name
    k = 1
    while f"{name}_{k}" in taken:
        k += 1
    taken.add(f"{name}_{k}")
    return f"{name}_{k}"


def rewrite(graph: Graph, head_dim: int, local_window: int, mask_input: str = MASK_INPUT) -> Graph:
    if head_dim not in SUPPORTED_HEAD_DIMS:
        raise UnsupportedHeadDim(f"head_dim {head_dim} not in {SUPPORTED_HEAD_DIMS}")
    if local_window < 2 or local_window % 2:
        raise ValueError("local_window must be an even integer >= 2")
    matches = find_sdpa_patterns(graph)
    if not matches:
        return graph
    shapes = infer_shapes(graph)
    for m in matches:
        d = shapes[m.q].shape[-1]
        if d != head_dim:
            raise UnsupportedHeadDim(f"{m.softmax}: graph head dim {d} does not match --hdim {head_dim}")
    inputs = graph.input_map()
    if mask_input not in inputs:
        raise NoAttentionMaskInput(f"graph has attention patterns but no {mask_input!r} input")
    am = inputs[mask_input]
    if len(am.shape) != 4 or am.shape[1:3] != (1, 1):
        raise NoAttentionMaskInput(f"{mask_input!r} must be [B,1,1,S], got {list(am.shape)}")

    g = graph.copy()
    tensors = set(shapes)
    node_names = {n.name for n in g.nodes}

    one = _fresh("pad_bias/one", tensors)
    fmin = _fresh("pad_bias/f16_min", tensors)
    inv, scaled, bias = _fresh("pad_bias/inverted", tensors), _fresh("pad_bias/f32", tensors), _fresh(PAD_BIAS, tensors)
    g.initializers += [Initializer(one, np.ones(1, np.float32)), Initializer(fmin, np.full(1, F16_MIN, np.float32))]
    chain = [
        Node(_fresh("PadBias/Sub", node_names), "Sub", [one, mask_input], [inv]),
        Node(_fresh("PadBias/Mul", node_names), "Mul", [inv, fmin], [scaled]),
        Node(_fresh("PadBias/Cast", node_names), "Cast", [scaled], [bias], {"to": "f16"}),
    ]

    by_av = {m.av_matmul: m for m in matches}
    first_av = min(i for i, n in enumerate(g.nodes) if n.name in by_av)
    out: list[Node] = []
    for i, n in enumerate(g.nodes):
        if i == first_av:
            out.extend(chain)
        m = by_av.get(n.name)
        if m is None:
            out.append(n)
            continue
        k_in = m.k
        if not m.k_transposed:
            # the MatMul consumed K^T directly; hand the kernel K
            k_in = _fresh(f"{m.k}/untransposed", tensors)
            rank = len(shapes[m.k].shape)
            out.append(Node(_fresh(f"{m.softmax}/KTranspose", node_names), "Transpose", [m.k], [k_in],
                            {"perm": list(range(rank - 2)) + [rank - 1, rank - 2]}))
        wl, wr = window_for(m.kind, local_window)
        fused_name = _fresh(n.name.rsplit("/", 1)[0] + "/FusedFlashAttention", node_names)
        out.append(Node(fused_name, "FusedFlashAttention", [m.q, k_in, m.v, bias], list(n.outputs),
                        {"scale": m.scale, "window_left": wl, "window_right": wr, "layer_kind": m.kind}))
    g.nodes = out
    return dce(g).validate()


def dce(graph: Graph) -> Graph:
    """Drop nodes and initializers that no graph output depends on."""
    producers = graph.producers()
    live_tensors: set[str] = set()
    live_nodes: set[str] = set()
    stack = list(graph.outputs)
    while stack:
        t = stack.pop()
        if t in live_tensors:
            continue
        live_tensors.add(t)
        node = producers.get(t)
        if node is not None and node.name not in live_nodes:
            live_nodes.add(node.name)
            stack.extend(i for i in node.inputs if i)
    nodes = [n for n in graph.nodes if n.name in live_nodes]
    inits = [i for i in graph.initializers if i.name in live_tensors]
    if len(nodes) == len(graph.nodes) and len(inits) == len(graph.initializers):
        return graph
    return Graph(list(graph.inputs), list(graph.outputs), nodes, inits)


def _seq_dims(graph: Graph) -> dict[str, tuple[bool, ...]]:
    """Per tensor, which axes descend from the sequence axis of a graph input.

    Rank-4 inputs are read as [B, H, S, d] and ``attention_mask`` as [B, 1, 1, S];
    constants carry no sequence axes. This tells [B, H, S, S] scores apart from
    [B, H, S, d] activations even when S == d.
    """
    shapes = infer_shapes(graph)
    tag: dict[str, tuple[bool, ...]] = {}
    for t in graph.inputs:
        r = len(t.shape)
        if t.name == MASK_INPUT and r == 4:
            tag[t.name] = (False, False, False, True)
        elif r == 4:
            tag[t.name] = (False, False, True, False)
        else:
            tag[t.name] = (False,) * r
    for i in graph.initializers:
        tag[i.name] = (False,) * len(i.shape)

    def bcast(names: list[str], out_shape: tuple[int, ...]) -> tuple[bool, ...]:
        r = len(out_shape)
        flags = [False] * r
        for nm in names:
            sh, tg = shapes[nm].shape, tag[nm]
            off = r - len(sh)
            for k, (dim, f) in enumerate(zip(sh, tg)):
                if f and dim == out_shape[off + k]:
                    flags[off + k] = True
        return tuple(flags)

    for n in graph.topological_order():
        ins = [i for i in n.inputs if i]
        out_shape = shapes[n.outputs[0]].shape
        if n.op in ("Add", "Sub", "Mul", "Where", "Expand"):
            t = bcast(ins, out_shape)
        elif n.op == "MatMul":
            a, b = tag[ins[0]], tag[ins[1]]
            t = _batch_flags(shapes, tag, ins, out_shape) + (a[-2], b[-1])
        elif n.op == "Transpose":
            src = tag[ins[0]]
            perm = n.attrs.get("perm", list(reversed(range(len(src)))))
            t = tuple(src[p] for p in perm)
        elif n.op == "FusedFlashAttention":
            q, v = tag[ins[0]], tag[ins[2]]
            t = q[:3] + (v[3],)
        elif n.op == "Constant":
            t = (False,) * len(out_shape)
        else:
            t = tag[ins[0]]
        for o in n.outputs:
            tag[o] = t
    return tag


def _batch_flags(shapes, tag, ins, out_shape) -> tuple[bool, ...]:
    r = len(out_shape) - 2
    flags = [False] * r
    for nm in ins:
        sh, tg = shapes[nm].shape[:-2], tag[nm][:-2]
        off = r - len(sh)
        for k, (dim, f) in enumerate(zip(sh, tg)):
            if f and dim == out_shape[off + k]:
                flags[off + k] = True
    return tuple(flags)


def square_tensors(graph: Graph) -> list[str]:
    """Names of non-input rank-4 tensors shaped [., ., S, S].

    A tensor counts when both trailing axes trace back to the sequence axis, or,
    when S differs from the head dim, when both trailing dims simply equal S.
    """
    shapes = infer_shapes(graph)
    inputs = graph.input_map()
    seq = head = None
    if MASK_INPUT in inputs:
        seq = inputs[MASK_INPUT].shape[-1]
    for t in graph.inputs:
        if t.name != MASK_INPUT and len(t.shape) == 4:
            seq = seq if seq is not None else t.shape[2]
            head = t.shape[3]
    tags = _seq_dims(graph)
    out = []
    for name, t in shapes.items():
        if name in inputs or len(t.shape) != 4:
            continue
        traced = tags[name][2] and tags[name][3]
        by_value = seq is not None and seq != head and t.shape[2] == t.shape[3] == seq
        if traced or by_value:
            out.append(name)
    return sorted(out)
