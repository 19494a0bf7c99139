"""Machine-first report serialization.

Every JSON artifact carries a ``schema_version`` field; the schema constants
below describe the shapes in JSON-Schema form so consumers (and the test
suite) can validate outputs. Human-readable tables are renderings of the
JSON, never a separate code path.
"""

from __future__ import annotations

import io

from .kvstore import MemoryReport
from .policies import CompressionConfig, PolicyResult

SCHEMA_VERSION = 1

# PKV as originally described scores tokens from instruction rows; this
# engine substitutes the observation window for instruction tokens, and that
# substitution is surfaced in every report that includes a pkv run.
POLICY_NOTES = {
    "pkv": "instruction-token scoring approximated by observation-window rows",
}

POLICY_RESULT_SCHEMA = {
    "type": "object",
    "required": [
        "schema_version",
        "policy",
        "config",
        "selection_invocations",
        "layers",
    ],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "policy": {"type": "string"},
        "config": {"type": ["object", "null"]},
        "task": {"type": ["string", "null"]},
        "selection_invocations": {"type": "integer", "minimum": 0},
        "layers": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["layer", "count", "indices"],
                "properties": {
                    "layer": {"type": "integer"},
                    "count": {"type": "integer", "minimum": 0},
                    "indices": {"type": "array", "items": {"type": "integer"}},
                },
            },
        },
    },
}

RUN_REPORT_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "config", "trace", "policies"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "config": {"type": "object"},
        "trace": {
            "type": "object",
            "required": ["num_layers", "num_heads", "seq_len", "head_dim", "mode"],
        },
        "policies": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["memory", "retained_attention_mass", "wall_time_s"],
                "properties": {
                    "memory": {
                        "type": "object",
                        "required": ["full_bytes", "compressed_bytes", "ratio"],
                    },
                    "retained_attention_mass": {
                        "type": "array",
                        "items": {"type": ["number", "null"]},
                    },
                    "mean_retained_attention_mass": {"type": ["number", "null"]},
                    "selection_invocations": {"type": "integer"},
                    "wall_time_s": {"type": "number"},
                    "note": {"type": "string"},
                },
            },
        },
        "heatmap_files": {"type": "array", "items": {"type": "string"}},
    },
}

SIMILARITY_SUMMARY_SCHEMA = {
    "type": "object",
    "required": [
        "schema_version",
        "mean_intra_group_jaccard",
        "mean_cross_group_jaccard",
        "difference",
        "heatmap_files",
    ],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "mean_intra_group_jaccard": {"type": "number"},
        "mean_cross_group_jaccard": {"type": "number"},
        "difference": {"type": "number"},
        "heatmap_files": {"type": "array", "items": {"type": "string"}},
        "sharing": {"type": "boolean"},
    },
}

BENCH_REPORT_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "repetitions", "sharing", "no_sharing"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "repetitions": {"type": "integer", "minimum": 1},
        "sharing": {
            "type": "object",
            "required": ["selection_invocations", "median_s", "p90_s"],
        },
        "no_sharing": {
            "type": "object",
            "required": ["selection_invocations", "median_s", "p90_s"],
        },
    },
}


def trace_summary(trace) -> dict:
    return {
        "num_layers": trace.num_layers,
        "num_heads": trace.num_heads,
        "seq_len": trace.seq_len,
        "head_dim": trace.head_dim,
        "mode": trace.mode.name,
        "label": trace.label,
    }


def policy_result_to_json(result: PolicyResult) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "policy": result.policy,
        "config": result.config.to_json() if result.config is not None else None,
        "task": result.task.value if result.task is not None else None,
        "selection_invocations": result.selection_invocations,
        "layers": [
            {
                "layer": s.layer,
                "count": len(s),
                "indices": [int(i) for i in s.indices],
            }
            for s in result.index_sets
        ],
    }
    if result.policy in POLICY_NOTES:
        doc["note"] = POLICY_NOTES[result.policy]
    return doc


def _mean_defined(masses: list[float | None]) -> float | None:
    defined = [m for m in masses if m is not None]
    return float(sum(defined) / len(defined)) if defined else None


def policy_report_entry(
    result: PolicyResult,
    memory: MemoryReport,
    masses: list[float | None],
    wall_time_s: float,
) -> dict:
    entry = {
        "memory": memory.to_json(),
        "retained_attention_mass": masses,
        "mean_retained_attention_mass": _mean_defined(masses),
        "selection_invocations": result.selection_invocations,
        "wall_time_s": wall_time_s,
    }
    if result.policy in POLICY_NOTES:
        entry["note"] = POLICY_NOTES[result.policy]
    return entry


def build_run_report(
    trace,
    config: CompressionConfig,
    policy_entries: dict[str, dict],
    heatmap_files: list[str] | None = None,
) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "config": config.to_json(),
        "trace": trace_summary(trace),
        "policies": policy_entries,
    }
    if heatmap_files is not None:
        doc["heatmap_files"] = heatmap_files
    return doc


COMPARISON_CSV_COLUMNS = (
    "policy",
    "memory_ratio",
    "mean_retained_mass",
    "selection_invocations",
    "wall_time_s",
)


def comparison_csv(policy_entries: dict[str, dict]) -> str:
    """One row per policy, mirroring the JSON report."""
    buf = io.StringIO()
    buf.write(",".join(COMPARISON_CSV_COLUMNS) + "\n")
    for name, entry in policy_entries.items():
        mean_mass = entry["mean_retained_attention_mass"]
        buf.write(
            f"{name},{entry['memory']['ratio']:.6f},"
            f"{'' if mean_mass is None else f'{mean_mass:.6f}'},"
            f"{entry['selection_invocations']},{entry['wall_time_s']:.6f}\n"
        )
    return buf.getvalue()
