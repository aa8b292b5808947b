"""Numerical check that a rewritten graph computes what the original did."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..attention import window_to_mask2d
from .fixtures import random_inputs
from .interpreter import interpret
from .ir import Graph
from .rewrite import find_sdpa_patterns


@dataclass
class NodeDiff:
    node: str
    tensor: str
    max_abs: float


@dataclass
class VerifyReport:
    trials: int
    tol: float
    max_abs: float = 0.0
    diffs: list[NodeDiff] = field(default_factory=list)
    mask_mismatches: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.max_abs <= self.tol and not self.failing_nodes and not self.mask_mismatches

    @property
    def failing_nodes(self) -> list[str]:
        return sorted({d.node for d in self.diffs if d.max_abs > self.tol})

    @property
    def first_failing(self) -> str | None:
        """Earliest fused node (in graph order) that diverges; later ones may only inherit its error."""
        for d in self.diffs:
            if d.node != "<output>" and (d.max_abs > self.tol or d.node in self.mask_mismatches):
                return d.node
        return self.mask_mismatches[0] if self.mask_mismatches else None

    def render(self) -> str:
        lines = [f"trials={self.trials} tol={self.tol:g} max_abs={self.max_abs:.3e} {'OK' if self.ok else 'FAIL'}"]
        if self.first_failing:
            lines.append(f"first failing node: {self.first_failing}")
        worst: dict[str, NodeDiff] = {}
        for d in self.diffs:
            if d.node not in worst or d.max_abs > worst[d.node].max_abs:
                worst[d.node] = d
        for name in sorted(worst):
            d = worst[name]
            flag = "FAIL" if d.max_abs > self.tol else "ok"
            lines.append(f"  {flag:4} {d.node} -> {d.tensor}: max_abs={d.max_abs:.3e}")
        for m in self.mask_mismatches:
            lines.append(f"  FAIL {m}: implied (window, padding) mask differs from the original mask")
        return "\n".join(lines)


def verify_rewrite(
    original: Graph,
    rewritten: Graph,
    trials: int = 3,
    tol: float = 1e-3,
    seed: int = 0,
    max_pad: int | None = None,
) -> VerifyReport:
    """Compare graph outputs and every fused node's output against the original tensors.

    ``max_pad`` bounds the random right padding; it defaults to the smallest
    local window_left so no query row is left without a key.
    """
    fused = [n for n in rewritten.topological_order() if n.op == "FusedFlashAttention"]
    pattern_masks = {m.av_matmul: m.mask for m in find_sdpa_patterns(original)}
    av_by_output = {n.outputs[0]: n.name for n in original.nodes if n.name in pattern_masks}
    if max_pad is None:
        lefts = [int(n.attrs["window_left"]) for n in fused if int(n.attrs["window_left"]) >= 0]
        max_pad = min(lefts) if lefts else None
    rng = np.random.default_rng(seed)
    report = VerifyReport(trials, tol)
    for _ in range(trials):
        feeds = random_inputs(original, rng, max_pad=max_pad)
        ref = interpret(original, feeds, return_all=True)
        got = interpret(rewritten, feeds, return_all=True)
        for o in original.outputs:
            e = float(np.abs(ref[o].astype(np.float64) - got[o].astype(np.float64)).max())
            report.max_abs = max(report.max_abs, e)
            report.diffs.append(NodeDiff("<output>", o, e))
        for n in fused:
            out = n.outputs[0]
            if out not in ref:
                continue
            e = float(np.abs(ref[out].astype(np.float64) - got[out].astype(np.float64)).max())
            report.diffs.append(NodeDiff(n.name, out, e))
            # the 2-D mask implied by (window, padding) must reproduce the original one
            av = av_by_output.get(out)
            if av is None or len(n.inputs) < 4:
                continue
            mask = np.broadcast_to(ref[pattern_masks[av]], ref[pattern_masks[av]].shape)
            S = mask.shape[-1]
            implied = window_to_mask2d(S, int(n.attrs["window_left"]), int(n.attrs["window_right"]),
                                       got[n.inputs[3]])
            if not np.array_equal(np.broadcast_to(implied, np.broadcast_shapes(implied.shape, mask.shape)),
                                  np.broadcast_to(mask, np.broadcast_shapes(implied.shape, mask.shape))):
                if n.name not in report.mask_mismatches:
                    report.mask_mismatches.append(n.name)
    return report
