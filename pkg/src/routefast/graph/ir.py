"""JSON-serializable computation-graph IR.

Schema::

    {"inputs": [{"name", "shape": [int], "dtype": "f32"|"f16"}],
     "outputs": [name],
     "nodes": [{"name", "op", "inputs": [name], "outputs": [name], "attrs": {...}}],
     "initializers": [{"name", "shape", "dtype", "data": [number, row-major]}]}

Tensor names are single-assignment. Shapes are static.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

OPS = frozenset({
    "MatMul", "Add", "Sub", "Mul", "Softmax", "Transpose", "Cast", "Where", "Expand", "Constant",
    "FusedFlashAttention", "Identity",
})
DTYPES = {"f32": np.float32, "f16": np.float16}


class SchemaError(ValueError):
    pass


class ValidationError(ValueError):
    pass


@dataclass(frozen=True)
class TensorInfo:
    name: str
    shape: tuple[int, ...]
    dtype: str = "f32"

    def to_json(self) -> dict:
        return {"name": self.name, "shape": list(self.shape), "dtype": self.dtype}


@dataclass
class Node:
    name: str
    op: str
    inputs: list[str]
    outputs: list[str]
    attrs: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "op": self.op, "inputs": list(self.inputs),
                "outputs": list(self.outputs), "attrs": dict(sorted(self.attrs.items()))}


@dataclass
class Initializer:
    name: str
    data: np.ndarray
    dtype: str = "f32"

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    def to_json(self) -> dict:
        return {"name": self.name, "shape": list(self.shape), "dtype": self.dtype,
                # shortest repr that round-trips at the stored precision
                "data": [float(str(x)) for x in self.data.ravel()]}


@dataclass
class Graph:
    inputs: list[TensorInfo]
    outputs: list[str]
    nodes: list[Node]
    initializers: list[Initializer] = field(default_factory=list)

    # --- lookups ---

    def producers(self) -> dict[str, Node]:
        return {o: n for n in self.nodes for o in n.outputs}

    def consumers(self) -> dict[str, list[Node]]:
        out: dict[str, list[Node]] = {}
        for n in self.nodes:
            for i in n.inputs:
                if i:
                    out.setdefault(i, []).append(n)
        return out

    def initializer_map(self) -> dict[str, Initializer]:
        return {i.name: i for i in self.initializers}

    def input_map(self) -> dict[str, TensorInfo]:
        return {i.name: i for i in self.inputs}

    def node(self, name: str) -> Node:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)

    def count(self, op: str) -> int:
        return sum(1 for n in self.nodes if n.op == op)

    # --- structure ---

    def validate(self) -> "Graph":
        defined: dict[str, str] = {}

        def define(name: str, by: str) -> None:
            if not name:
                raise ValidationError(f"empty tensor name defined by {by}")
            if name in defined:
                raise ValidationError(f"tensor {name!r} produced by both {defined[name]} and {by}")
            defined[name] = by

        for t in self.inputs:
            define(t.name, "graph input")
            if t.dtype not in DTYPES:
                raise ValidationError(f"input {t.name!r}: unknown dtype {t.dtype!r}")
        for init in self.initializers:
            define(init.name, "initializer")
        names = set()
        for n in self.nodes:
            if n.name in names:
                raise ValidationError(f"duplicate node name {n.name!r}")
            names.add(n.name)
            if n.op not in OPS:
                raise ValidationError(f"node {n.name!r}: unknown op {n.op!r}")
            for o in n.outputs:
                define(o, f"node {n.name!r}")
        for n in self.nodes:
            for i in n.inputs:
                if i and i not in defined:
                    raise ValidationError(f"node {n.name!r} reads unresolved tensor {i!r}")
        for o in self.outputs:
            if o not in defined:
                raise ValidationError(f"graph output {o!r} is never produced")
        self.topological_order()
        return self

    def topological_order(self) -> list[Node]:
        """Kahn's algorithm; ties keep the listed node order."""
        producer = self.producers()
        deps: dict[str, set[str]] = {}
        for n in self.nodes:
            deps[n.name] = {producer[i].name for i in n.inputs if i in producer}
        order, done = [], set()
        remaining = list(self.nodes)
        while remaining:
            progressed = False
            rest = []
            for n in remaining:
                if deps[n.name] <= done:
                    order.append(n)
                    done.add(n.name)
                    progressed = True
                else:
                    rest.append(n)
            if not progressed:
                raise ValidationError(f"cycle through nodes {sorted(x.name for x in rest)}")
            remaining = rest
        return order

    # --- serialization ---

    def to_json(self) -> dict:
        return {
            "inputs": [t.to_json() for t in self.inputs],
            "outputs": list(self.outputs),
            "nodes": [n.to_json() for n in self.nodes],
            "initializers": [i.to_json() for i in self.initializers],
        }

    def dumps(self, indent: int | None = None) -> str:
        return json.dumps(self.to_json(), indent=indent, sort_keys=False)

    def copy(self) -> "Graph":
        return parse_graph(self.dumps())


def _require(obj: dict, key: str, where: str) -> Any:
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    return obj[key]


def _shape(v: Any, where: str) -> tuple[int, ...]:
    if not isinstance(v, list) or not all(isinstance(x, int) and x >= 0 for x in v):
        raise SchemaError(f"{where}: shape must be a list of non-negative ints")
    return tuple(v)


def graph_from_dict(d: dict) -> Graph:
    if not isinstance(d, dict):
        raise SchemaError("graph must be a JSON object")
    inputs = []
    for k, t in enumerate(_require(d, "inputs", "graph")):
        where = f"inputs[{k}]"
        inputs.append(TensorInfo(_require(t, "name", where), _shape(_require(t, "shape", where), where),
                                 _require(t, "dtype", where)))
    nodes = []
    for k, n in enumerate(_require(d, "nodes", "graph")):
        where = f"nodes[{k}]"
        nodes.append(Node(_require(n, "name", where), _require(n, "op", where), list(_require(n, "inputs", where)),
                          list(_require(n, "outputs", where)), dict(n.get("attrs", {}))))
    inits = []
    for k, i in enumerate(d.get("initializers", [])):
        where = f"initializers[{k}]"
        shape = _shape(_require(i, "shape", where), where)
        dtype = _require(i, "dtype", where)
        if dtype not in DTYPES:
            raise SchemaError(f"{where}: unknown dtype {dtype!r}")
        data = np.asarray(_require(i, "data", where), dtype=DTYPES[dtype])
        if data.size != int(np.prod(shape, dtype=np.int64)):
            raise SchemaError(f"{where}: {data.size} values for shape {list(shape)}")
        inits.append(Initializer(_require(i, "name", where), data.reshape(shape), dtype))
    outputs = list(_require(d, "outputs", "graph"))
    return Graph(inputs, outputs, nodes, inits)


def parse_graph(text: str) -> Graph:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not JSON: {exc}") from None
    return graph_from_dict(d).validate()


def load_graph(path) -> Graph:
    with open(path, encoding="utf-8") as f:
        return parse_graph(f.read())


def save_graph(graph: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(graph.dumps())
        f.write("\n")


# --- static shape inference ----------------------------------------------------


def _broadcast(*shapes: Iterable[int], where: str) -> tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(*[tuple(s) for s in shapes]))
    except ValueError:
        raise ValidationError(f"{where}: shapes {[list(s) for s in shapes]} do not broadcast") from None


def _promote(*dtypes: str) -> str:
    return "f32" if "f32" in dtypes else "f16"


def infer_shapes(graph: Graph) -> dict[str, TensorInfo]:
    info: dict[str, TensorInfo] = {t.name: t for t in graph.inputs}
    for i in graph.initializers:
        info[i.name] = TensorInfo(i.name, i.shape, i.dtype)
    for n in graph.topological_order():
        ins = [info[i] for i in n.inputs if i]
        where = f"node {n.name!r} ({n.op})"
        op = n.op
        if op in ("Add", "Sub", "Mul"):
            shape, dt = _broadcast(ins[0].shape, ins[1].shape, where=where), _promote(ins[0].dtype, ins[1].dtype)
        elif op == "Where":
            shape = _broadcast(*(t.shape for t in ins), where=where)
            dt = _promote(ins[1].dtype, ins[2].dtype)
        elif op == "MatMul":
            a, b = ins[0].shape, ins[1].shape
            if len(a) < 2 or len(b) < 2 or a[-1] != b[-2]:
                raise ValidationError(f"{where}: cannot multiply {list(a)} by {list(b)}")
            shape = _broadcast(a[:-2], b[:-2], where=where) + (a[-2], b[-1])
            dt = _promote(ins[0].dtype, ins[1].dtype)
        elif op in ("Softmax", "Identity"):
            shape, dt = ins[0].shape, ins[0].dtype
        elif op == "Transpose":
            perm = n.attrs.get("perm", list(reversed(range(len(ins[0].shape)))))
            if sorted(perm) != list(range(len(ins[0].shape))):
                raise ValidationError(f"{where}: bad perm {perm}")
            shape, dt = tuple(ins[0].shape[p] for p in perm), ins[0].dtype
        elif op == "Cast":
            shape, dt = ins[0].shape, n.attrs["to"]
        elif op == "Expand":
            shape, dt = _broadcast(ins[0].shape, n.attrs["shape"], where=where), ins[0].dtype
        elif op == "Constant":
            shape, dt = tuple(n.attrs["shape"]), n.attrs.get("dtype", "f32")
        elif op == "FusedFlashAttention":
            q, k, v = ins[:3]
            if len(q.shape) != 4 or k.shape != v.shape or q.shape[:2] != k.shape[:2] or q.shape[3] != k.shape[3]:
                raise ValidationError(f"{where}: bad Q/K/V shapes {q.shape} {k.shape} {v.shape}")
            shape, dt = q.shape[:3] + (v.shape[3],), q.dtype
        else:
            raise ValidationError(f"{where}: no shape rule")
        for o in n.outputs:
            info[o] = TensorInfo(o, tuple(int(x) for x in shape), dt)
    return info
