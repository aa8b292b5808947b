import math
import tracemalloc

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from routefast.attention import (
    F16_MIN,
    MIB,
    AttentionSpec,
    ShapeMismatch,
    fa_memory_bytes,
    flash_attention,
    mask_memory_bytes,
    memory_table,
    padding_bias,
    sdpa,
    smallest_failing_seq_len,
    window_to_mask2d,
)


def rand(rng, B, H, S, d, dtype=np.float32):
    return [rng.standard_normal((B, H, S, d)).astype(dtype) for _ in range(3)]


def loop_attention(Q, K, V, scale):
    """Scalar-loop softmax attention in float64; no vectorization shared with the library."""
    B, H, S, d = Q.shape
    out = np.zeros((B, H, S, V.shape[-1]))
    for b in range(B):
        for h in range(H):
            for i in range(S):
                s = [scale * sum(float(Q[b, h, i, t]) * float(K[b, h, j, t]) for t in range(d)) for j in range(S)]
                m = max(s)
                e = [math.exp(x - m) for x in s]
                z = sum(e)
                for j in range(S):
                    out[b, h, i] += (e[j] / z) * V[b, h, j].astype(np.float64)
    return out


def random_pad(rng, B, S, max_pad):
    am = np.ones((B, S), np.float32)
    for b in range(B):
        p = int(rng.integers(0, max_pad + 1))
        if p:
            am[b, S - p:] = 0
    return padding_bias(am)


def test_sdpa_trivial_cases():
    rng = np.random.default_rng(0)
    Q, K, V = rand(rng, 1, 2, 1, 32)
    np.testing.assert_allclose(sdpa(Q, K, V), V, atol=1e-7)
    S = 6
    V = np.eye(S, dtype=np.float32)[None, None]
    Z = np.zeros((1, 1, S, S), np.float32)
    np.testing.assert_allclose(sdpa(Z, Z, V), np.full((1, 1, S, S), 1 / S), atol=1e-7)


def test_sdpa_matches_loop_oracle():
    rng = np.random.default_rng(1)
    Q, K, V = rand(rng, 1, 1, 37, 32)
    np.testing.assert_allclose(sdpa(Q, K, V), loop_attention(Q, K, V, 1 / math.sqrt(32)), atol=1e-6)


def test_fully_masked_rows_are_zero_and_rows_sum_to_one():
    rng = np.random.default_rng(2)
    Q, K, V = rand(rng, 1, 1, 4, 32)
    mask = np.zeros((4, 4), np.float32)
    mask[1] = F16_MIN
    out = sdpa(Q, K, V, mask)
    assert np.all(out[0, 0, 1] == 0) and np.all(np.isfinite(out))
    ones = np.ones((1, 1, 4, 1), np.float32)
    np.testing.assert_allclose(sdpa(Q, K, np.broadcast_to(ones, (1, 1, 4, 32)).copy())[..., 0], 1.0, atol=1e-6)


def test_shape_errors():
    rng = np.random.default_rng(0)
    Q, K, V = rand(rng, 1, 1, 4, 32)
    with pytest.raises(ShapeMismatch):
        sdpa(Q, K[:, :, :, :16], V)
    with pytest.raises(ShapeMismatch):
        sdpa(Q[0], K, V)
    with pytest.raises(ShapeMismatch):
        sdpa(Q, K, V, np.zeros((3, 3)))
    with pytest.raises(ShapeMismatch):
        flash_attention(Q, K, V, AttentionSpec(pad_bias=np.zeros((1, 1, 1, 5))))
    with pytest.raises(ValueError):
        AttentionSpec(scale=0)
    with pytest.raises(ValueError):
        AttentionSpec(window_left=-2)


def test_window_to_mask_examples():
    m = window_to_mask2d(3, 1, 1)
    assert (m == 0).tolist() == [[True, True, False], [True, True, True], [False, True, True]]
    assert np.all(m[m != 0] == F16_MIN)
    assert np.all(window_to_mask2d(5) == 0)
    pm = window_to_mask2d(4, pad_bias=padding_bias(np.array([[1, 1, 1, 0]])))
    assert pm.shape == (1, 1, 4, 4) and np.all(pm[..., 3] == F16_MIN) and np.all(pm[..., :3] == 0)
    big = window_to_mask2d(128, 63, 64)
    for i in range(128):
        zeros = {j for j in range(128) if big[i, j] == 0}
        assert zeros == set(range(max(0, i - 63), min(127, i + 64) + 1))


def test_flash_trivial_windows():
    rng = np.random.default_rng(3)
    Q, K, V = rand(rng, 2, 2, 50, 32)
    np.testing.assert_allclose(flash_attention(Q, K, V), sdpa(Q, K, V), atol=1e-5)
    np.testing.assert_allclose(flash_attention(Q, K, V, AttentionSpec(window_left=0, window_right=0)), V, atol=1e-6)


@pytest.mark.parametrize("S", [100, 512, 1000])
def test_flash_sliding_window_with_padding(S):
    rng = np.random.default_rng(S)
    Q, K, V = rand(rng, 2, 2, S, 64)
    pb = random_pad(rng, 2, S, 63)
    spec = AttentionSpec(window_left=63, window_right=64, pad_bias=pb)
    ref = sdpa(Q, K, V, window_to_mask2d(S, 63, 64, pb))
    np.testing.assert_allclose(flash_attention(Q, K, V, spec), ref, atol=1e-4)


def test_flash_deterministic():
    rng = np.random.default_rng(4)
    Q, K, V = rand(rng, 1, 2, 300, 32)
    spec = AttentionSpec(window_left=20, window_right=5)
    a = flash_attention(Q, K, V, spec)
    b = flash_attention(Q, K, V, spec)
    assert a.tobytes() == b.tobytes()


def test_flash_f16_storage():
    rng = np.random.default_rng(5)
    Q, K, V = rand(rng, 1, 1, 40, 32, np.float16)
    out = flash_attention(Q, K, V)
    assert out.dtype == np.float16
    np.testing.assert_allclose(out.astype(np.float32), sdpa(Q, K, V).astype(np.float32), atol=2e-3)


def _peak(S: int, d: int = 32) -> int:
    rng = np.random.default_rng(0)
    Q, K, V = rand(rng, 1, 1, S, d)
    tracemalloc.start()
    flash_attention(Q, K, V, tile=64)
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    return peak


def test_flash_aux_memory_independent_of_s():
    d = 32
    aux = [_peak(S, d) - S * d * 4 for S in (256, 1024, 4096)]
    # the S x S score matrix at S=4096 would be 128 MiB
    assert max(aux) < 2 * MIB
    assert max(aux) - min(aux) < 256 * 1024


def test_memory_model():
    assert mask_memory_bytes(1, 12, 8192, 2) == 1_610_612_736
    assert mask_memory_bytes(1, 12, 16384, 2) == 4 * 1_610_612_736
    assert mask_memory_bytes(1, 12, 1, 2) == 24
    assert fa_memory_bytes(1, 12, 8192, 64, 64, 2) == 12 * (2 * 64 * 64 + 8192 * 64) * 2
    with pytest.raises(ValueError):
        mask_memory_bytes(0, 12, 8, 2)
    s = smallest_failing_seq_len(718 * MIB)
    assert 4096 < s <= 8192 and s == 5601
    rows = memory_table()
    assert [r.fits_budget for r in rows if r.seq_len in (4096, 8192)] == [True, False]
    assert all(r.fa_bytes < r.sdpa_bytes for r in rows)


@given(st.integers(2, 4096))
def test_mask_memory_quadratic(S):
    if S % 2 == 0:
        assert mask_memory_bytes(1, 12, S, 2) == 4 * mask_memory_bytes(1, 12, S // 2, 2)
    s = smallest_failing_seq_len(S * 1000)
    assert mask_memory_bytes(1, 12, s, 2) > S * 1000 >= (mask_memory_bytes(1, 12, s - 1, 2) if s > 1 else 0)


@given(st.integers(1, 40), st.sampled_from([(-1, -1), (0, 0), (1, 2), (63, 64), (3, -1), (-1, 0)]),
       st.sampled_from([1, 5, 16, 64]), st.integers(0, 2**31))
@settings(max_examples=80)
def test_flash_property(S, window, tile, seed):
    rng = np.random.default_rng(seed)
    Q, K, V = rand(rng, 2, 1, S, 32)
    wl, wr = window
    # padding no deeper than the left window, so every query keeps a key
    pb = random_pad(rng, 2, S, min(S - 1, wl if wl >= 0 else S - 1))
    spec = AttentionSpec(window_left=wl, window_right=wr, pad_bias=pb)
    ref = sdpa(Q, K, V, window_to_mask2d(S, wl, wr, pb))
    np.testing.assert_allclose(flash_attention(Q, K, V, spec, tile=tile), ref, atol=1e-4)
