"""Reference attention: naive SDPA, tiled streaming-softmax attention and a memory model.

Tensors are numpy arrays laid out [B, H, S, d]. Half precision is emulated with
``np.float16`` storage; arithmetic inside both kernels runs in float64 and is
cast back to the query dtype at the end.

Masking convention shared by both kernels: an additive value at or below
:data:`F16_MIN` (the most negative finite half) removes the key entirely;
other values are added to the score. A query row with no remaining key
produces zeros.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

F16_MIN = -65504.0
DEFAULT_TILE = 64
SUPPORTED_HEAD_DIMS = (32, 64, 128)
DTYPE_BYTES = {"f16": 2, "bf16": 2, "f32": 4, "f64": 8}


class ShapeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class AttentionSpec:
    scale: float | None = None  # None: 1/sqrt(d)
    window_left: int = -1
    window_right: int = -1
    pad_bias: np.ndarray | None = None  # [B, 1, 1, S]

    def __post_init__(self):
        if self.scale is not None and not self.scale > 0:
            raise ValueError("scale must be positive")
        if self.window_left < -1 or self.window_right < -1:
            raise ValueError("window bounds must be >= -1")

    def resolved_scale(self, d: int) -> float:
        return self.scale if self.scale is not None else 1.0 / math.sqrt(d)


def _check_qkv(Q: np.ndarray, K: np.ndarray, V: np.ndarray) -> None:
    if Q.ndim != 4 or K.ndim != 4 or V.ndim != 4:
        raise ShapeMismatch(f"expected [B,H,S,d] tensors, got {Q.shape}, {K.shape}, {V.shape}")
    if K.shape != V.shape[:3] + (K.shape[3],) or Q.shape[:2] != K.shape[:2] or Q.shape[3] != K.shape[3]:
        raise ShapeMismatch(f"incompatible Q/K/V shapes {Q.shape}, {K.shape}, {V.shape}")
    if K.shape[2] != V.shape[2]:
        raise ShapeMismatch("K and V sequence lengths differ")


def _check_pad(pad_bias: np.ndarray, B: int, S: int) -> np.ndarray:
    pb = np.asarray(pad_bias)
    if pb.shape not in ((B, 1, 1, S), (1, 1, 1, S)):
        raise ShapeMismatch(f"pad_bias must be [B,1,1,S]={[B, 1, 1, S]}, got {list(pb.shape)}")
    return pb


def sdpa(
    Q: np.ndarray,
    K: np.ndarray,
    V: np.ndarray,
    mask: np.ndarray | None = None,
    scale: float | None = None,
) -> np.ndarray:
    """softmax(Q K^T * scale + mask) V with the full S x S score matrix."""
    _check_qkv(Q, K, V)
    d = Q.shape[-1]
    scale = scale if scale is not None else 1.0 / math.sqrt(d)
    s = np.matmul(Q.astype(np.float64), np.swapaxes(K.astype(np.float64), -1, -2)) * scale
    if mask is not None:
        m = np.asarray(mask, dtype=np.float64)
        try:
            m = np.broadcast_to(m, s.shape)
        except ValueError:
            raise ShapeMismatch(f"mask {m.shape} does not broadcast to scores {s.shape}") from None
        s = np.where(m <= F16_MIN, -np.inf, s + m)
    row_max = s.max(axis=-1, keepdims=True)
    live = np.isfinite(row_max)
    p = np.exp(s - np.where(live, row_max, 0.0))
    denom = p.sum(axis=-1, keepdims=True)
    p = np.divide(p, denom, out=np.zeros_like(p), where=live & (denom > 0))
    return np.matmul(p, V.astype(np.float64)).astype(Q.dtype, copy=False)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=-1, keepdims=True)


def flash_attention(
    Q: np.ndarray,
    K: np.ndarray,
    V: np.ndarray,
    spec: AttentionSpec | None = None,
    tile: int = DEFAULT_TILE,
) -> np.ndarray:
    """Tiled attention with a running max and running sum per query row.

    Query blocks and key tiles are both ``tile`` long. Key tiles lying wholly
    outside the sliding window of a query block are skipped. Working memory is
    a few [B, H, tile, tile] and [B, H, tile, d] blocks plus the output.
    """
    spec = spec or AttentionSpec()
    _check_qkv(Q, K, V)
    if tile < 1:
        raise ValueError("tile must be >= 1")
    B, H, S, d = Q.shape
    Sk = K.shape[2]
    scale = spec.resolved_scale(d)
    wl, wr = spec.window_left, spec.window_right
    pad = None if spec.pad_bias is None else _check_pad(spec.pad_bias, B, Sk)

    out = np.empty(Q.shape, dtype=Q.dtype)
    for q0 in range(0, S, tile):
        q1 = min(q0 + tile, S)
        q = Q[:, :, q0:q1].astype(np.float64) * scale
        m = np.full((B, H, q1 - q0), -np.inf)
        l = np.zeros((B, H, q1 - q0))
        acc = np.zeros((B, H, q1 - q0, V.shape[-1]))
        qi = np.arange(q0, q1)[:, None]
        lo = 0 if wl < 0 else max(0, q0 - wl)
        hi = Sk if wr < 0 else min(Sk, q1 - 1 + wr + 1)
        for k0 in range((lo // tile) * tile, hi, tile):
            k1 = min(k0 + tile, Sk)
            s = np.matmul(q, np.swapaxes(K[:, :, k0:k1].astype(np.float64), -1, -2))
            kj = np.arange(k0, k1)[None, :]
            ok = np.ones((q1 - q0, k1 - k0), dtype=bool)
            if wl >= 0:
                ok &= qi - kj <= wl
            if wr >= 0:
                ok &= kj - qi <= wr
            keep = np.broadcast_to(ok, s.shape)
            if pad is not None:
                pb = pad[:, :, :, k0:k1].astype(np.float64)
                keep = keep & (pb > F16_MIN)
                s = s + pb
            s = np.where(keep, s, -np.inf)
            m_new = np.maximum(m, s.max(axis=-1))
            m_safe = np.where(np.isfinite(m_new), m_new, 0.0)
            p = np.exp(s - m_safe[..., None])
            alpha = np.exp(m - m_safe)
            l = l * alpha + p.sum(axis=-1)
            acc = acc * alpha[..., None] + np.matmul(p, V[:, :, k0:k1].astype(np.float64))
            m = m_new
        o = np.divide(acc, l[..., None], out=np.zeros_like(acc), where=l[..., None] > 0)
        out[:, :, q0:q1] = o
    return out


def in_window(i: np.ndarray, j: np.ndarray, window_left: int, window_right: int) -> np.ndarray:
    ok = np.ones(np.broadcast_shapes(np.shape(i), np.shape(j)), dtype=bool)
    if window_left >= 0:
        ok &= (i - j) <= window_left
    if window_right >= 0:
        ok &= (j - i) <= window_right
    return ok


def window_to_mask2d(
    S: int,
    window_left: int = -1,
    window_right: int = -1,
    pad_bias: np.ndarray | None = None,
) -> np.ndarray:
    """Additive mask equivalent to (window, padding): [S, S], or [B, 1, S, S] with padding."""
    if S < 1:
        raise ValueError("S must be >= 1")
    i = np.arange(S)[:, None]
    j = np.arange(S)[None, :]
    ok = in_window(i, j, window_left, window_right)
    mask = np.where(ok, 0.0, F16_MIN).astype(np.float32)
    if pad_bias is None:
        return mask
    pb = np.asarray(pad_bias, dtype=np.float32)
    if pb.ndim != 4 or pb.shape[1:3] != (1, 1) or pb.shape[3] != S:
        raise ShapeMismatch(f"pad_bias must be [B,1,1,{S}], got {list(pb.shape)}")
    full = np.where(ok[None, None] & (pb > F16_MIN), mask[None, None] + pb, F16_MIN)
    return full.astype(np.float32)


def padding_bias(attention_mask: np.ndarray) -> np.ndarray:
    """[B, S] or [B,1,1,S] 1/0 mask -> [B,1,1,S] f16 bias: -65504 * (1 - mask)."""
    am = np.asarray(attention_mask, dtype=np.float32)
    if am.ndim == 2:
        am = am[:, None, None, :]
    return (np.float32(F16_MIN) * (np.float32(1.0) - am)).astype(np.float16)


# --- memory model --------------------------------------------------------------


def mask_memory_bytes(batch: int, heads: int, seq_len: int, bytes_per_element: int) -> int:
    """Bytes of a materialized [B, H, S, S] attention mask."""
    _positive(batch, heads, seq_len, bytes_per_element)
    return batch * heads * seq_len * seq_len * bytes_per_element


def fa_memory_bytes(
    batch: int, heads: int, seq_len: int, head_dim: int, tile: int, bytes_per_element: int
) -> int:
    """Tiled working set: one K and one V tile plus the output accumulator."""
    _positive(batch, heads, seq_len, head_dim, tile, bytes_per_element)
    return batch * heads * (2 * tile * head_dim + seq_len * head_dim) * bytes_per_element


def _positive(*args: int) -> None:
    if any(int(a) < 1 for a in args):
        raise ValueError("all arguments must be >= 1")


MIB = 1 << 20


def smallest_failing_seq_len(budget_bytes: int, batch: int = 1, heads: int = 12, bytes_per_element: int = 2) -> int:
    """Smallest S whose SDPA mask no longer fits in ``budget_bytes``."""
    per = batch * heads * bytes_per_element
    s = max(1, math.isqrt(budget_bytes // per))
    while per * s * s <= budget_bytes:
        s += 1
    while s > 1 and per * (s - 1) * (s - 1) > budget_bytes:
        s -= 1
    return s


@dataclass(frozen=True)
class MemoryRow:
    seq_len: int
    sdpa_bytes: int
    fa_bytes: int
    fits_budget: bool


def memory_table(
    heads: int = 12,
    dtype: str = "f16",
    budget_mb: float = 718.0,
    seq_lens: tuple[int, ...] = (512, 1024, 2048, 4096, 8192, 16384, 32768),
    batch: int = 1,
    head_dim: int = 64,
    tile: int = DEFAULT_TILE,
) -> list[MemoryRow]:
    """``budget_mb`` is in MiB; fits_budget refers to the SDPA mask."""
    bpe = DTYPE_BYTES[dtype]
    budget = int(budget_mb * MIB)
    rows = []
    for s in seq_lens:
        sd = mask_memory_bytes(batch, heads, s, bpe)
        rows.append(MemoryRow(s, sd, fa_memory_bytes(batch, heads, s, head_dim, tile, bpe), sd <= budget))
    return rows
