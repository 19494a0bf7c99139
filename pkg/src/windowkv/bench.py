"""Selection microbenchmark: sharing versus per-layer selection.

Times the window-selection stage of a compression run with intra-group index
sharing (one invocation per group) against independent per-layer selection
(one invocation per layer). Only the relative direction is meaningful; the
absolute numbers are hardware-bound.
"""

from __future__ import annotations

import statistics
import time

from .policies import CompressionConfig, PolicyResult, windowkv_compress
from .report import SCHEMA_VERSION
from .scoring import TaskType
from .trace import AttentionTrace


def _p90(samples: list[float]) -> float:
    ordered = sorted(samples)
    if len(ordered) == 1:
        return ordered[0]
    rank = max(0, -(-9 * len(ordered) // 10) - 1)  # ceil(0.9 * k) - 1
    return ordered[rank]


def run_selection_bench(
    trace: AttentionTrace,
    config: CompressionConfig,
    task: TaskType,
    repetitions: int = 10,
) -> dict:
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")

    timings: dict[bool, list[float]] = {True: [], False: []}
    results: dict[bool, PolicyResult] = {}
    for _ in range(repetitions):
        for share in (True, False):
            start = time.perf_counter()
            results[share] = windowkv_compress(trace, config, task, share=share)
            timings[share].append(time.perf_counter() - start)

    def summarize(share: bool) -> dict:
        samples = timings[share]
        return {
            "selection_invocations": results[share].selection_invocations,
            "median_s": statistics.median(samples),
            "p90_s": _p90(samples),
            "samples_s": samples,
        }

    return {
        "schema_version": SCHEMA_VERSION,
        "repetitions": repetitions,
        "sharing": summarize(True),
        "no_sharing": summarize(False),
    }
