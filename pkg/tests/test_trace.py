import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windowkv import (
    AttentionTrace,
    ConfigError,
    TraceMeta,
    TraceMode,
    compute_attention,
    layer_attention,
    observation_attention,
)

from conftest import attn_trace, qk_trace, reference_softmax_attention


def _zero_qk_trace(n: int, d: int = 2) -> AttentionTrace:
    z = np.zeros((1, 1, n, d), dtype=np.float32)
    return AttentionTrace(
        num_layers=1, num_heads=1, seq_len=n, head_dim=d,
        mode=TraceMode.QK, queries=z, keys=z,
    )


def test_zero_qk_gives_uniform_causal_rows():
    attn = compute_attention(_zero_qk_trace(3), 0, 0)
    expected = np.array([[1, 0, 0], [0.5, 0.5, 0], [1 / 3, 1 / 3, 1 / 3]])
    np.testing.assert_allclose(attn, expected, atol=1e-12)


def test_attn_mode_returns_stored_matrix_unchanged():
    rng = np.random.default_rng(0)
    trace = attn_trace(rng, 2, 2, 5)
    got = compute_attention(trace, 1, 0)
    assert got.dtype == np.float32
    assert np.array_equal(got, trace.attn[1, 0])


def test_qk_matches_reference_softmax():
    rng = np.random.default_rng(42)
    trace = qk_trace(rng, 1, 1, 4, 2)
    got = compute_attention(trace, 0, 0)
    want = reference_softmax_attention(trace.queries[0, 0], trace.keys[0, 0], 2)
    np.testing.assert_allclose(got, want, atol=1e-6)


def test_out_of_range_layer_and_head():
    rng = np.random.default_rng(1)
    trace = attn_trace(rng, 2, 2, 4)
    with pytest.raises(IndexError):
        compute_attention(trace, 2, 0)
    with pytest.raises(IndexError):
        compute_attention(trace, 0, 2)
    with pytest.raises(IndexError):
        compute_attention(trace, -1, 0)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(2, 12),
    d=st.integers(1, 6),
    seed=st.integers(0, 2**32 - 1),
    scale=st.floats(0.01, 100.0),
)
def test_qk_attention_always_causal_and_normalized(n, d, seed, scale):
    rng = np.random.default_rng(seed)
    trace = qk_trace(rng, 1, 1, n, d)
    trace = AttentionTrace(
        num_layers=1, num_heads=1, seq_len=n, head_dim=d, mode=TraceMode.QK,
        queries=(trace.queries * scale).astype(np.float32),
        keys=(trace.keys * scale).astype(np.float32),
    )
    attn = compute_attention(trace, 0, 0)
    assert np.all(attn[np.triu_indices(n, k=1)] == 0.0)
    np.testing.assert_allclose(attn.sum(axis=1), 1.0, atol=1e-5)


def test_layer_attention_averages_heads():
    rng = np.random.default_rng(7)
    trace = attn_trace(rng, 1, 3, 6)
    got = layer_attention(trace, 0)
    want = sum(trace.attn[0, head].astype(np.float64) for head in range(3)) / 3
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_observation_attention_matches_layer_attention_rows():
    rng = np.random.default_rng(8)
    for trace in (attn_trace(rng, 2, 3, 10), qk_trace(rng, 2, 3, 10, 4)):
        for layer in range(2):
            full = layer_attention(trace, layer)
            for alpha in (1, 3, 9):
                obs = observation_attention(trace, layer, alpha)
                np.testing.assert_allclose(obs, full[10 - alpha :], atol=1e-12)
    with pytest.raises(ValueError):
        observation_attention(trace, 0, 0)
    with pytest.raises(ValueError):
        observation_attention(trace, 0, 10)


def test_validate_rejects_noncausal_and_unnormalized():
    bad = np.full((1, 1, 3, 3), 1 / 3, dtype=np.float32)
    t = AttentionTrace(1, 1, 3, 2, TraceMode.ATTN, attn=bad)
    with pytest.raises(ConfigError, match="causal"):
        t.validate()

    mat = np.tril(np.full((3, 3), 0.2, dtype=np.float32))
    t = AttentionTrace(1, 1, 3, 2, TraceMode.ATTN, attn=mat[None, None])
    with pytest.raises(ConfigError, match="unit sum"):
        t.validate()


def test_validate_rejects_bad_dimensions():
    mat = np.ones((1, 1, 1, 1), dtype=np.float32)
    with pytest.raises(ConfigError, match="dimensions"):
        AttentionTrace(1, 1, 1, 1, TraceMode.ATTN, attn=mat).validate()


def test_meta_rejects_unknown_format_version():
    with pytest.raises(ConfigError, match="version"):
        TraceMeta(format_version=99)


def test_payload_is_immutable():
    rng = np.random.default_rng(3)
    trace = attn_trace(rng, 1, 1, 4)
    with pytest.raises(ValueError):
        trace.attn[0, 0, 0, 0] = 5.0
