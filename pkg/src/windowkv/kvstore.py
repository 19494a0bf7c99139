"""Simulated KV cache: compaction, memory accounting, and quality proxies.

The cache stores opaque handles rather than real key/value tensors; what
matters downstream is which positions survive and what they would cost.
Memory is counted in exact integer arithmetic. Selection quality is proxied
by retained attention mass: the fraction of observation-row attention over
review columns that the retained indices capture.
"""

from __future__ import annotations

from dataclasses import dataclass

from .policies import PolicyResult
from .trace import AttentionTrace, observation_attention


def default_bytes_per_token(num_heads: int, head_dim: int, bytes_per_value: int = 4) -> int:
    """Key plus value tensors across heads, 4-byte elements by default."""
    return 2 * num_heads * head_dim * bytes_per_value


@dataclass(frozen=True)
class MemoryReport:
    full_bytes: int
    compressed_bytes: int
    ratio: float
    per_layer: tuple[dict, ...]

    def to_json(self) -> dict:
        return {
            "full_bytes": self.full_bytes,
            "compressed_bytes": self.compressed_bytes,
            "ratio": self.ratio,
            "per_layer": list(self.per_layer),
        }


@dataclass(eq=False)
class SimulatedKVCache:
    """Retained entries per layer, keyed by token position in ascending order."""

    num_layers: int
    seq_len: int
    bytes_per_token_per_layer: int
    entries: list[dict[int, tuple[int, int]]]

    def layer_count(self, layer: int) -> int:
        return len(self.entries[layer])

    def total_count(self) -> int:
        return sum(len(e) for e in self.entries)

    def memory_report(self) -> MemoryReport:
        bpt = self.bytes_per_token_per_layer
        full = self.num_layers * self.seq_len * bpt
        per_layer = tuple(
            {"layer": layer, "retained": len(e), "bytes": len(e) * bpt}
            for layer, e in enumerate(self.entries)
        )
        compressed = self.total_count() * bpt
        return MemoryReport(
            full_bytes=full,
            compressed_bytes=compressed,
            ratio=compressed / full,
            per_layer=per_layer,
        )


def compact(
    trace: AttentionTrace,
    result: PolicyResult,
    bytes_per_token_per_layer: int | None = None,
) -> SimulatedKVCache:
    """Gather the retained entries of a policy result into a cache.

    Raises on out-of-range or duplicate indices; gather order preserves
    ascending token position.
    """
    if len(result.index_sets) != trace.num_layers:
        raise ValueError(
            f"result covers {len(result.index_sets)} layers, trace has "
            f"{trace.num_layers}"
        )
    bpt = (
        bytes_per_token_per_layer
        if bytes_per_token_per_layer is not None
        else default_bytes_per_token(trace.num_heads, trace.head_dim)
    )
    entries: list[dict[int, tuple[int, int]]] = []
    for layer, s in enumerate(result.index_sets):
        layer_entries: dict[int, tuple[int, int]] = {}
        prev = -1
        for pos in s.indices:
            pos = int(pos)
            if not 0 <= pos < trace.seq_len:
                raise ValueError(f"layer {layer} index {pos} out of range")
            if pos <= prev:
                raise ValueError(f"layer {layer} has duplicate or unsorted index {pos}")
            layer_entries[pos] = (layer, pos)
            prev = pos
        entries.append(layer_entries)
    return SimulatedKVCache(
        num_layers=trace.num_layers,
        seq_len=trace.seq_len,
        bytes_per_token_per_layer=bpt,
        entries=entries,
    )


def retained_attention_mass(
    trace: AttentionTrace, result: PolicyResult, alpha: int
) -> list[float | None]:
    """Per layer: observation-row attention captured by retained review columns,
    as a fraction of all observation-row attention on review columns.

    Layers whose observation rows place zero mass on the review context have
    no defined fraction and report None.
    """
    n = trace.seq_len
    review_len = n - alpha
    out: list[float | None] = []
    for layer, s in enumerate(result.index_sets):
        obs = observation_attention(trace, layer, alpha)[:, :review_len]
        denom = float(obs.sum())
        if denom <= 0.0:
            out.append(None)
            continue
        retained_review = s.indices[s.indices < review_len]
        num = float(obs[:, retained_review].sum())
        out.append(num / denom)
    return out
