"""Attention trace data model.

A trace captures one prefill's causal attention for every layer and head,
either as post-softmax matrices (ATTN mode) or as raw query/key projections
(QK mode) from which attention is recomputed on demand. Traces are immutable
after construction and safe to read concurrently.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import ConfigError

SUPPORTED_FORMAT_VERSION = 1

# Row sums of stored attention must hit 1.0 within this tolerance. Traces
# arriving from external runtimes are allowed the looser bound because
# reduced-precision kernels do not renormalize exactly.
ROW_SUM_TOL_STRICT = 1e-5
ROW_SUM_TOL_IMPORTED = 1e-4


class TraceMode(enum.Enum):
    ATTN = 0
    QK = 1


@dataclass(frozen=True)
class TraceMeta:
    """Provenance attached to an in-memory trace (not part of the wire format)."""

    format_version: int = SUPPORTED_FORMAT_VERSION
    rng_seed: int | None = None
    generator_params: dict[str, Any] | None = None

    def __post_init__(self) -> None:
        if self.format_version != SUPPORTED_FORMAT_VERSION:
            raise ConfigError(
                f"unsupported trace format version {self.format_version}, "
                f"expected {SUPPORTED_FORMAT_VERSION}"
            )


def _freeze(arr: np.ndarray) -> np.ndarray:
    if arr.flags.writeable:
        arr.flags.writeable = False
    return arr


@dataclass(eq=False)
class AttentionTrace:
    """Per-layer, per-head attention (or Q/K pairs) for one prefill.

    ATTN payloads are (m, h, n, n) float32 with causal zeros above the
    diagonal and unit row sums. QK payloads are two (m, h, n, d_k) float32
    arrays; attention is derived via :func:`compute_attention`.
    """

    num_layers: int
    num_heads: int
    seq_len: int
    head_dim: int
    mode: TraceMode
    attn: np.ndarray | None = None
    queries: np.ndarray | None = None
    keys: np.ndarray | None = None
    label: str | None = None
    meta: TraceMeta | None = None

    def __post_init__(self) -> None:
        for arr in (self.attn, self.queries, self.keys):
            if arr is not None:
                _freeze(arr)

    def validate(self, row_sum_tolerance: float = ROW_SUM_TOL_STRICT) -> None:
        m, h, n, d = self.num_layers, self.num_heads, self.seq_len, self.head_dim
        if m < 1 or h < 1 or n < 2 or d < 1:
            raise ConfigError(
                f"invalid trace dimensions: layers={m} heads={h} tokens={n} head_dim={d}"
            )
        if self.mode is TraceMode.ATTN:
            if self.attn is None or self.queries is not None or self.keys is not None:
                raise ConfigError("ATTN trace must carry exactly one attention payload")
            if self.attn.shape != (m, h, n, n):
                raise ConfigError(
                    f"attention payload shape {self.attn.shape} != {(m, h, n, n)}"
                )
            if self.attn.dtype != np.float32:
                raise ConfigError(f"attention payload dtype {self.attn.dtype} != float32")
            self._validate_attn_contents(row_sum_tolerance)
        elif self.mode is TraceMode.QK:
            if self.queries is None or self.keys is None or self.attn is not None:
                raise ConfigError("QK trace must carry query and key payloads only")
            for name, arr in (("queries", self.queries), ("keys", self.keys)):
                if arr.shape != (m, h, n, d):
                    raise ConfigError(f"{name} payload shape {arr.shape} != {(m, h, n, d)}")
                if arr.dtype != np.float32:
                    raise ConfigError(f"{name} payload dtype {arr.dtype} != float32")
                if not np.isfinite(arr).all():
                    raise ConfigError(f"{name} payload contains NaN or Inf")
        else:  # pragma: no cover - enum is closed
            raise ConfigError(f"unknown trace mode {self.mode!r}")

    def _validate_attn_contents(self, tol: float) -> None:
        n = self.seq_len
        upper = np.triu_indices(n, k=1)
        # Per (layer, head) loop keeps peak memory at one matrix even when
        # the payload is a broadcast view over layers.
        for layer in range(self.num_layers):
            for head in range(self.num_heads):
                a = self.attn[layer, head]
                if not np.isfinite(a).all():
                    raise ConfigError(f"attention (layer {layer}, head {head}) has NaN or Inf")
                if np.any(a[upper] != 0.0):
                    raise ConfigError(
                        f"attention (layer {layer}, head {head}) is not causal"
                    )
                if np.any(a < 0.0):
                    raise ConfigError(
                        f"attention (layer {layer}, head {head}) has negative entries"
                    )
                sums = a.sum(axis=1, dtype=np.float64)
                worst = float(np.abs(sums - 1.0).max())
                if worst > tol:
                    raise ConfigError(
                        f"attention (layer {layer}, head {head}) rows deviate from "
                        f"unit sum by {worst:.3e} (tolerance {tol:.0e})"
                    )


def compute_attention(trace: AttentionTrace, layer: int, head: int) -> np.ndarray:
    """Attention matrix for one (layer, head).

    ATTN mode returns the stored float32 matrix unchanged. QK mode computes
    softmax(Q K^T / sqrt(d_k)) in float64 with the causal mask applied
    before the softmax.
    """
    if not 0 <= layer < trace.num_layers:
        raise IndexError(f"layer {layer} out of range [0, {trace.num_layers})")
    if not 0 <= head < trace.num_heads:
        raise IndexError(f"head {head} out of range [0, {trace.num_heads})")
    if trace.mode is TraceMode.ATTN:
        return trace.attn[layer, head]

    q = trace.queries[layer, head].astype(np.float64)
    k = trace.keys[layer, head].astype(np.float64)
    logits = (q @ k.T) / math.sqrt(trace.head_dim)
    n = trace.seq_len
    future = np.triu(np.ones((n, n), dtype=bool), k=1)
    logits[future] = -np.inf
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    weights[future] = 0.0
    return weights / weights.sum(axis=1, keepdims=True)


def layer_attention(trace: AttentionTrace, layer: int) -> np.ndarray:
    """Head-averaged attention for one layer, in float64.

    Selection operates on a single per-layer map, so heads are averaged
    before any scoring.
    """
    if trace.mode is TraceMode.ATTN:
        return np.mean(trace.attn[layer], axis=0, dtype=np.float64)
    acc = compute_attention(trace, layer, 0)
    for head in range(1, trace.num_heads):
        acc = acc + compute_attention(trace, layer, head)
    return acc / trace.num_heads


def observation_attention(trace: AttentionTrace, layer: int, alpha: int) -> np.ndarray:
    """Head-averaged attention restricted to the last ``alpha`` rows.

    Window selection and the retained-mass metric only read the observation
    rows, so computing just that (alpha, n) block keeps large traces cheap.
    Values match the corresponding rows of :func:`layer_attention`.
    """
    n = trace.seq_len
    if not 1 <= alpha < n:
        raise ValueError(f"alpha must satisfy 1 <= alpha < n, got alpha={alpha} n={n}")
    if trace.mode is TraceMode.ATTN:
        return np.mean(trace.attn[layer, :, n - alpha :, :], axis=0, dtype=np.float64)

    if not 0 <= layer < trace.num_layers:
        raise IndexError(f"layer {layer} out of range [0, {trace.num_layers})")
    k = trace.keys[layer].astype(np.float64)  # (h, n, d)
    q = trace.queries[layer, :, n - alpha :, :].astype(np.float64)  # (h, alpha, d)
    logits = q @ k.transpose(0, 2, 1) / math.sqrt(trace.head_dim)
    rows = np.arange(n - alpha, n)[:, None]
    future = np.arange(n)[None, :] > rows
    logits[:, future] = -np.inf
    logits -= logits.max(axis=2, keepdims=True)
    weights = np.exp(logits)
    weights[:, future] = 0.0
    weights /= weights.sum(axis=2, keepdims=True)
    return weights.mean(axis=0)
