"""Trace-driven KV cache compression engine.

Core pipeline: score review tokens from the observation window, rank
fixed-size review windows task-adaptively, retain whole windows under
pyramid-shaped group budgets, and share retained indices across the layers
of each group. Baseline policies (slm, h2o, pkv, fullkv) run behind the
same interface for comparison.
"""

from .budget import (
    BudgetPlan,
    allocate_group_budgets,
    build_plan,
    distribute_to_layers,
    group_budget_targets,
    per_layer_kv_size_to_total,
)
from .classifier import ClassifierDecision, HeuristicClassifier, classify, classify_or_override
from .errors import ConfigError, InfeasibleBudgetError, TraceFormatError, WindowKVError
from .grouping import (
    LayerGrouping,
    RetainedIndexSet,
    build_grouping,
    jaccard,
    share_indices,
)
from .kvstore import MemoryReport, SimulatedKVCache, compact, retained_attention_mass
from .policies import (
    CompressionConfig,
    PolicyResult,
    full_kv,
    h2o_compress,
    pkv_compress,
    run_policy,
    slm_compress,
    windowkv_compress,
)
from .scoring import (
    ReviewWindow,
    TaskType,
    TokenScores,
    WindowScore,
    partition_windows,
    score_all_windows,
    score_tokens,
    score_window,
)
from .synthetic import generate_synthetic
from .trace import (
    AttentionTrace,
    TraceMeta,
    TraceMode,
    compute_attention,
    layer_attention,
    observation_attention,
)
from .wire import read_trace, read_trace_file, write_trace, write_trace_file

__version__ = "0.1.0"

__all__ = [
    "AttentionTrace",
    "BudgetPlan",
    "ClassifierDecision",
    "CompressionConfig",
    "ConfigError",
    "HeuristicClassifier",
    "InfeasibleBudgetError",
    "LayerGrouping",
    "MemoryReport",
    "PolicyResult",
    "RetainedIndexSet",
    "ReviewWindow",
    "SimulatedKVCache",
    "TaskType",
    "TokenScores",
    "TraceFormatError",
    "TraceMeta",
    "TraceMode",
    "WindowKVError",
    "WindowScore",
    "allocate_group_budgets",
    "build_grouping",
    "build_plan",
    "classify",
    "classify_or_override",
    "compact",
    "compute_attention",
    "distribute_to_layers",
    "full_kv",
    "generate_synthetic",
    "group_budget_targets",
    "h2o_compress",
    "jaccard",
    "layer_attention",
    "observation_attention",
    "partition_windows",
    "per_layer_kv_size_to_total",
    "pkv_compress",
    "read_trace",
    "read_trace_file",
    "retained_attention_mass",
    "run_policy",
    "score_all_windows",
    "score_tokens",
    "score_window",
    "share_indices",
    "slm_compress",
    "windowkv_compress",
    "write_trace",
    "write_trace_file",
]
