"""Seeded synthetic attention-trace generator.

Profiles shape where attention mass lands so that selection behavior can be
tested against constructions with known structure:

* ``uniform``        every causal row is flat, 1/(i+1) per entry.
* ``sink``           column 0 absorbs a fixed fraction of every row's mass.
* ``hotspot``        one or more contiguous column regions absorb most of
                     each row's mass; the regions are recorded in the trace
                     metadata so tests can assert recovery.
* ``layered-sparsity``  rows sharpen with layer depth (entropy decays), and
                     the columns they sharpen onto drift slowly from layer
                     to layer, giving adjacent layers correlated selections.

Generation is a pure function of its arguments: same dimensions, seed, and
profile parameters produce identical traces.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .trace import AttentionTrace, TraceMeta, TraceMode

PROFILES = ("uniform", "sink", "hotspot", "layered-sparsity")

# layered-sparsity knobs: row concentration spans [_KAPPA_MIN, _KAPPA_MAX]
# geometrically across layers; the column-preference field follows an AR(1)
# walk with coefficient _LATENT_RHO across layers.
_KAPPA_MIN = 0.5
_KAPPA_MAX = 8.0
_LATENT_RHO = 0.9
_HEAD_JITTER = 0.15
_ROW_JITTER = 0.3


def generate_synthetic(
    num_layers: int,
    num_heads: int,
    seq_len: int,
    head_dim: int,
    seed: int = 0,
    profile: str = "uniform",
    *,
    regions: Sequence[tuple[int, int]] | None = None,
    num_regions: int = 1,
    region_len: int = 32,
    region_mass: float = 0.9,
    sink_mass: float = 0.5,
    label: str | None = None,
) -> AttentionTrace:
    """Build a deterministic ATTN-mode trace with the requested profile."""
    if num_layers < 1 or num_heads < 1 or seq_len < 2 or head_dim < 1:
        raise ConfigError(
            f"invalid dimensions: layers={num_layers} heads={num_heads} "
            f"tokens={seq_len} head_dim={head_dim}"
        )
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}, expected one of {PROFILES}")

    params: dict = {"profile": profile}
    rng = np.random.default_rng(seed)

    if profile == "uniform":
        payload = _uniform_payload(num_layers, num_heads, seq_len)
    elif profile == "sink":
        if not 0.0 < sink_mass < 1.0:
            raise ConfigError(f"sink_mass must be in (0, 1), got {sink_mass}")
        params["sink_mass"] = sink_mass
        payload = _sink_payload(rng, num_layers, num_heads, seq_len, sink_mass)
    elif profile == "hotspot":
        resolved = _resolve_regions(rng, seq_len, regions, num_regions, region_len)
        if not 0.0 < region_mass < 1.0:
            raise ConfigError(f"region_mass must be in (0, 1), got {region_mass}")
        params["regions"] = [list(r) for r in resolved]
        params["region_mass"] = region_mass
        payload = _hotspot_payload(
            rng, num_layers, num_heads, seq_len, resolved, region_mass
        )
    else:
        payload = _layered_sparsity_payload(rng, num_layers, num_heads, seq_len)

    trace = AttentionTrace(
        num_layers=num_layers,
        num_heads=num_heads,
        seq_len=seq_len,
        head_dim=head_dim,
        mode=TraceMode.ATTN,
        attn=payload,
        label=label,
        meta=TraceMeta(rng_seed=seed, generator_params=params),
    )
    trace.validate()
    return trace


def _uniform_payload(m: int, h: int, n: int) -> np.ndarray:
    base = np.tril(np.ones((n, n), dtype=np.float64))
    base /= np.arange(1, n + 1, dtype=np.float64)[:, None]
    # One shared matrix broadcast across layers and heads; traces are
    # immutable, so the read-only view is safe and keeps memory at O(n^2).
    return np.broadcast_to(base.astype(np.float32), (m, h, n, n))


def _normalize_rows(weights: np.ndarray) -> np.ndarray:
    sums = weights.sum(axis=1, keepdims=True)
    return (weights / sums).astype(np.float32)


def _sink_payload(
    rng: np.random.Generator, m: int, h: int, n: int, sink_mass: float
) -> np.ndarray:
    causal = np.tril(np.ones((n, n), dtype=np.float64))
    out = np.empty((m, h, n, n), dtype=np.float32)
    boost = sink_mass / (1.0 - sink_mass)
    for layer in range(m):
        for head in range(h):
            w = rng.uniform(0.5, 1.5, size=(n, n)) * causal
            rest = w.sum(axis=1) - w[:, 0]
            # Column 0 takes exactly sink_mass of each row (row 0 has no
            # other causal entries and keeps all of its mass there).
            w[:, 0] = np.where(rest > 0, boost * rest, 1.0)
            out[layer, head] = _normalize_rows(w)
    return out


def _resolve_regions(
    rng: np.random.Generator,
    n: int,
    regions: Sequence[tuple[int, int]] | None,
    num_regions: int,
    region_len: int,
) -> list[tuple[int, int]]:
    if regions is not None:
        resolved = sorted((int(s), int(e)) for s, e in regions)
        if not resolved:
            raise ConfigError("hotspot profile needs at least one region")
        prev_end = 0
        for start, end in resolved:
            if not 0 <= start < end <= n:
                raise ConfigError(f"region [{start}, {end}) out of range for n={n}")
            if start < prev_end:
                raise ConfigError("hotspot regions must not overlap")
            prev_end = end
        return resolved
    if num_regions < 1 or region_len < 1:
        raise ConfigError("num_regions and region_len must be positive")
    free = n - num_regions * region_len
    if free < 0:
        raise ConfigError(
            f"{num_regions} regions of {region_len} tokens do not fit in n={n}"
        )
    cuts = np.sort(rng.integers(0, free + 1, size=num_regions))
    return [
        (int(c + i * region_len), int(c + i * region_len + region_len))
        for i, c in enumerate(cuts)
    ]


def _hotspot_payload(
    rng: np.random.Generator,
    m: int,
    h: int,
    n: int,
    regions: list[tuple[int, int]],
    region_mass: float,
) -> np.ndarray:
    causal = np.tril(np.ones((n, n), dtype=np.float64))
    in_cols = np.zeros(n, dtype=bool)
    for start, end in regions:
        in_cols[start:end] = True

    out = np.empty((m, h, n, n), dtype=np.float32)
    for layer in range(m):
        for head in range(h):
            u = rng.uniform(0.5, 1.5, size=(n, n)) * causal
            w_in = u * in_cols[None, :]
            w_out = u * ~in_cols[None, :]
            in_sums = w_in.sum(axis=1, keepdims=True)
            out_sums = w_out.sum(axis=1, keepdims=True)
            part_in = np.divide(w_in, in_sums, out=np.zeros_like(w_in), where=in_sums > 0)
            part_out = np.divide(
                w_out, out_sums, out=np.zeros_like(w_out), where=out_sums > 0
            )
            has_in = in_sums > 0
            has_out = out_sums > 0
            frac_in = np.where(has_in, np.where(has_out, region_mass, 1.0), 0.0)
            w = frac_in * part_in + (1.0 - frac_in) * part_out
            out[layer, head] = _normalize_rows(w)
    return out


def _layered_sparsity_payload(
    rng: np.random.Generator, m: int, h: int, n: int
) -> np.ndarray:
    # Column-preference field: one AR(1) step per layer, drawn up front so
    # the stream layout is independent of how heads are iterated.
    latents = np.empty((m, n), dtype=np.float64)
    g = rng.standard_normal(n)
    latents[0] = g
    step = math.sqrt(1.0 - _LATENT_RHO**2)
    for layer in range(1, m):
        g = _LATENT_RHO * g + step * rng.standard_normal(n)
        latents[layer] = g

    if m > 1:
        kappas = _KAPPA_MIN * (_KAPPA_MAX / _KAPPA_MIN) ** (
            np.arange(m) / (m - 1)
        )
    else:
        kappas = np.array([_KAPPA_MIN])

    future = np.triu(np.ones((n, n), dtype=bool), k=1)
    out = np.empty((m, h, n, n), dtype=np.float32)
    for layer in range(m):
        for head in range(h):
            prefs = latents[layer] + _HEAD_JITTER * rng.standard_normal(n)
            logits = kappas[layer] * prefs[None, :] + _ROW_JITTER * rng.standard_normal(
                (n, n)
            )
            logits[future] = -np.inf
            logits -= logits.max(axis=1, keepdims=True)
            w = np.exp(logits)
            w[future] = 0.0
            out[layer, head] = _normalize_rows(w)
    return out
