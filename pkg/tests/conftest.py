"""Shared builders and independent oracles for the test suite.

Oracles here are deliberately naive (python loops, math.exp) so they cannot
share a bug with the vectorized engine paths they check.
"""

from __future__ import annotations

import math

import numpy as np

from windowkv import AttentionTrace, TraceMeta, TraceMode


def random_causal_attn(rng: np.random.Generator, n: int) -> np.ndarray:
    """One random row-normalized causal matrix, float32."""
    w = np.tril(rng.uniform(0.05, 1.0, size=(n, n)))
    w /= w.sum(axis=1, keepdims=True)
    return w.astype(np.float32)


def attn_trace(
    rng: np.random.Generator, m: int, h: int, n: int, d: int = 4, label=None
) -> AttentionTrace:
    payload = np.empty((m, h, n, n), dtype=np.float32)
    for layer in range(m):
        for head in range(h):
            payload[layer, head] = random_causal_attn(rng, n)
    return AttentionTrace(
        num_layers=m,
        num_heads=h,
        seq_len=n,
        head_dim=d,
        mode=TraceMode.ATTN,
        attn=payload,
        label=label,
        meta=TraceMeta(),
    )


def qk_trace(rng: np.random.Generator, m: int, h: int, n: int, d: int) -> AttentionTrace:
    q = rng.normal(size=(m, h, n, d)).astype(np.float32)
    k = rng.normal(size=(m, h, n, d)).astype(np.float32)
    return AttentionTrace(
        num_layers=m,
        num_heads=h,
        seq_len=n,
        head_dim=d,
        mode=TraceMode.QK,
        queries=q,
        keys=k,
        meta=TraceMeta(),
    )


def trace_from_rows(rows: list[list[float]], num_layers: int = 1, num_heads: int = 1):
    """Single matrix repeated across layers and heads, from explicit rows."""
    n = len(rows)
    mat = np.zeros((n, n), dtype=np.float32)
    for i, row in enumerate(rows):
        mat[i, : len(row)] = row
    payload = np.tile(mat, (num_layers, num_heads, 1, 1))
    return AttentionTrace(
        num_layers=num_layers,
        num_heads=num_heads,
        seq_len=n,
        head_dim=4,
        mode=TraceMode.ATTN,
        attn=payload,
        meta=TraceMeta(),
    )


def reference_softmax_attention(q: np.ndarray, k: np.ndarray, d_k: int) -> np.ndarray:
    """Naive causal softmax(QK^T / sqrt(d_k)) oracle, plain loops."""
    n = q.shape[0]
    out = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        logits = []
        for j in range(i + 1):
            dot = sum(float(q[i, t]) * float(k[j, t]) for t in range(q.shape[1]))
            logits.append(dot / math.sqrt(d_k))
        peak = max(logits)
        exps = [math.exp(x - peak) for x in logits]
        total = sum(exps)
        for j in range(i + 1):
            out[i, j] = exps[j] / total
    return out
