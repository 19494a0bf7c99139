import math

import numpy as np
import pytest

from windowkv import (
    CompressionConfig,
    PolicyResult,
    RetainedIndexSet,
    TaskType,
    compact,
    full_kv,
    generate_synthetic,
    retained_attention_mass,
    slm_compress,
    windowkv_compress,
)
from windowkv.kvstore import default_bytes_per_token

from conftest import attn_trace, trace_from_rows


def cfg(**kw) -> CompressionConfig:
    base = dict(alpha=8, omega=16, gamma=1, lam=1.0, b_total=0, p_aggregation=4)
    base.update(kw)
    return CompressionConfig(**base)


def naive_mass(trace, index_set, alpha: int) -> float | None:
    """Direct summation oracle over head-averaged attention."""
    n = trace.seq_len
    avg = np.zeros((n, n))
    for head in range(trace.num_heads):
        avg += trace.attn[index_set.layer, head].astype(np.float64)
    avg /= trace.num_heads
    retained = set(int(i) for i in index_set.indices if i < n - alpha)
    denom = num = 0.0
    for i in range(n - alpha, n):
        for j in range(n - alpha):
            denom += avg[i, j]
            if j in retained:
                num += avg[i, j]
    return None if denom == 0 else num / denom


def test_compact_counts_fullkv_and_observation_only():
    rng = np.random.default_rng(0)
    trace = attn_trace(rng, 3, 2, 20)
    cache = compact(trace, full_kv(trace))
    assert cache.total_count() == 3 * 20

    result = slm_compress(trace, cfg(alpha=5, b_total=3 * 5))
    cache = compact(trace, result)
    assert cache.total_count() == 3 * 5
    assert [cache.layer_count(l) for l in range(3)] == [5, 5, 5]


def test_compact_rejects_bad_indices():
    rng = np.random.default_rng(1)
    trace = attn_trace(rng, 1, 1, 10)
    bad = PolicyResult(
        policy="x",
        index_sets=[RetainedIndexSet(layer=0, indices=np.array([0, 11]))],
        selection_invocations=0,
    )
    with pytest.raises(ValueError, match="out of range"):
        compact(trace, bad)
    with pytest.raises(ValueError, match="covers"):
        compact(trace, PolicyResult(policy="x", index_sets=[], selection_invocations=0))


def test_compact_preserves_ascending_gather_order():
    rng = np.random.default_rng(2)
    trace = attn_trace(rng, 1, 1, 12)
    result = slm_compress(trace, cfg(alpha=3, b_total=8))
    cache = compact(trace, result)
    assert list(cache.entries[0]) == sorted(cache.entries[0])


def test_memory_accounting_is_exact_integer_arithmetic():
    rng = np.random.default_rng(3)
    trace = attn_trace(rng, 4, 2, 64, d=16)
    result = slm_compress(trace, cfg(alpha=8, b_total=4 * 16))
    cache = compact(trace, result)
    report = cache.memory_report()
    bpt = default_bytes_per_token(2, 16)
    assert bpt == 2 * 2 * 16 * 4
    assert report.full_bytes == 4 * 64 * bpt
    assert report.compressed_bytes == 4 * 16 * bpt
    assert report.ratio == (4 * 16) / (4 * 64)
    assert sum(e["bytes"] for e in report.per_layer) == report.compressed_bytes


def test_memory_ratio_for_fullkv_is_one():
    rng = np.random.default_rng(4)
    trace = attn_trace(rng, 2, 1, 16)
    assert compact(trace, full_kv(trace)).memory_report().ratio == 1.0


def test_custom_bytes_per_token():
    rng = np.random.default_rng(5)
    trace = attn_trace(rng, 1, 1, 8)
    cache = compact(trace, full_kv(trace), bytes_per_token_per_layer=10)
    assert cache.memory_report().full_bytes == 80


def test_twelve_percent_budget_gives_matching_ratio():
    # Identity check: a 12% model-wide budget compacts to a ~12% ratio,
    # within the per-group remainder slack of the sharing path.
    m, n = 8, 256
    trace = generate_synthetic(m, 1, n, 4, seed=6, profile="sink")
    b_total = math.floor(0.12 * m * n)
    config = cfg(alpha=4, omega=8, gamma=4, lam=2.0, b_total=b_total)
    result = windowkv_compress(trace, config, TaskType.LOCALIZATION)
    report = compact(trace, result).memory_report()
    assert abs(report.ratio - 0.12) <= m / (m * n)
    assert report.compressed_bytes == sum(result.retained_counts) * default_bytes_per_token(1, 4)


def test_fullkv_mass_is_one_everywhere():
    rng = np.random.default_rng(7)
    trace = attn_trace(rng, 3, 2, 24)
    masses = retained_attention_mass(trace, full_kv(trace), alpha=6)
    assert all(m == pytest.approx(1.0) for m in masses)


def test_mass_matches_direct_summation_oracle():
    trace = generate_synthetic(2, 2, 64, 4, seed=8, profile="hotspot", regions=[(16, 40)])
    config = cfg(alpha=8, omega=8, gamma=1, lam=1.0, b_total=2 * 32)
    result = windowkv_compress(trace, config, TaskType.LOCALIZATION)
    got = retained_attention_mass(trace, result, alpha=8)
    for layer, s in enumerate(result.index_sets):
        assert got[layer] == pytest.approx(naive_mass(trace, s, 8), abs=1e-9)


def test_windowkv_captures_hotspot_mass():
    trace = generate_synthetic(2, 1, 128, 4, seed=9, profile="hotspot", regions=[(32, 64)])
    config = cfg(alpha=8, omega=16, gamma=1, lam=1.0, b_total=2 * 40)
    result = windowkv_compress(trace, config, TaskType.LOCALIZATION)
    masses = retained_attention_mass(trace, result, alpha=8)
    assert all(m >= 0.8 for m in masses)


def test_slm_mass_below_windowkv_on_mid_context_hotspot():
    trace = generate_synthetic(2, 1, 128, 4, seed=10, profile="hotspot", regions=[(48, 80)])
    config = cfg(alpha=8, omega=16, gamma=1, lam=1.0, b_total=2 * 48)
    wkv_mass = retained_attention_mass(
        trace, windowkv_compress(trace, config, TaskType.LOCALIZATION), 8
    )
    slm_mass = retained_attention_mass(trace, slm_compress(trace, config), 8)
    for w, s in zip(wkv_mass, slm_mass):
        assert s < w


def test_mass_monotone_in_added_indices():
    trace = generate_synthetic(1, 1, 48, 4, seed=11, profile="sink")
    config = cfg(alpha=6, omega=6, gamma=1, lam=1.0, b_total=18)
    result = windowkv_compress(trace, config, TaskType.LOCALIZATION)
    base_set = result.index_sets[0]
    base_mass = retained_attention_mass(trace, result, 6)[0]
    missing = sorted(set(range(42)) - base_set.as_set())
    for extra in missing[:8]:
        grown = PolicyResult(
            policy="x",
            index_sets=[
                RetainedIndexSet(
                    layer=0, indices=np.sort(np.append(base_set.indices, extra))
                )
            ],
            selection_invocations=0,
        )
        assert retained_attention_mass(trace, grown, 6)[0] >= base_mass - 1e-12


def test_windowkv_beats_random_retention_in_expectation():
    trace = generate_synthetic(2, 1, 96, 4, seed=12, profile="hotspot", regions=[(24, 56)])
    config = cfg(alpha=8, omega=8, gamma=1, lam=1.0, b_total=2 * 32)
    result = windowkv_compress(trace, config, TaskType.LOCALIZATION)
    wkv_mean = np.mean(retained_attention_mass(trace, result, 8))

    rng = np.random.default_rng(99)
    baselines = []
    for _ in range(30):
        sets = []
        for layer, s in enumerate(result.index_sets):
            k = len(review_positions := [i for i in s.indices if i < 88])
            picks = np.sort(rng.choice(88, size=k, replace=False))
            idx = np.concatenate([picks, np.arange(88, 96)])
            sets.append(RetainedIndexSet(layer=layer, indices=idx))
        rand = PolicyResult(policy="rand", index_sets=sets, selection_invocations=0)
        baselines.append(np.mean(retained_attention_mass(trace, rand, 8)))
    assert wkv_mean >= np.mean(baselines)


def test_mass_undefined_when_observation_rows_ignore_review():
    # Observation row attends only to itself and other observation columns.
    rows = [[1.0], [0.0, 1.0], [0.0, 0.5, 0.5]]
    trace = trace_from_rows(rows)
    result = PolicyResult(
        policy="x",
        index_sets=[RetainedIndexSet(layer=0, indices=np.array([1, 2]))],
        selection_invocations=0,
    )
    masses = retained_attention_mass(trace, result, alpha=2)
    assert masses == [None]
