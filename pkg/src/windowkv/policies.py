"""End-to-end KV cache compression policies.

Every policy consumes an attention trace plus a shared configuration and
emits one retained-index set per layer. The observation window (the last
alpha positions) is always retained by every policy; they differ in how the
review context is pruned:

* ``windowkv``  task-adaptive whole-window selection with intra-group index
                sharing and pyramid group budgets.
* ``slm``       StreamingLLM-style (Xiao et al.): initial tokens plus the
                recent window, attention-oblivious.
* ``h2o``       heavy-hitter selection (Zhang et al.): top review tokens by
                column-mean attention over all query rows.
* ``pkv``       PyramidKV-style (Cai et al.): per-token selection by
                observation-row attention under per-layer pyramid budgets.
* ``fullkv``    retains everything; the accounting baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .budget import BudgetPlan, build_plan
from .errors import ConfigError, InfeasibleBudgetError
from .grouping import RetainedIndexSet, build_grouping, share_indices
from .scoring import (
    ReviewWindow,
    TaskType,
    TokenScores,
    WindowScore,
    partition_windows,
    rank_window_tokens,
    score_window,
)
from .trace import AttentionTrace, layer_attention, observation_attention

POLICY_NAMES = ("windowkv", "slm", "h2o", "pkv", "fullkv")


@dataclass(frozen=True)
class CompressionConfig:
    """Hyperparameters shared by all policies.

    ``task=None`` means "decide later": the caller resolves it through the
    task classifier before compression runs.
    """

    alpha: int
    omega: int
    gamma: int
    lam: float
    b_total: int
    p_aggregation: int = 1
    task: TaskType | None = None

    def validate_for_trace(self, trace: AttentionTrace) -> None:
        n, m = trace.seq_len, trace.num_layers
        if not 1 <= self.alpha < n:
            raise ConfigError(
                f"alpha must satisfy 1 <= alpha < n: alpha={self.alpha} n={n}"
            )
        if self.omega < 1:
            raise ConfigError(f"omega must be >= 1, got {self.omega}")
        if self.omega > 1:
            if not 1 <= self.p_aggregation < self.omega:
                raise ConfigError(
                    f"p_aggregation must satisfy 1 <= p < omega: "
                    f"p={self.p_aggregation} omega={self.omega}"
                )
        elif self.p_aggregation != 1:
            raise ConfigError("omega=1 admits only p_aggregation=1")
        if self.lam < 1.0:
            raise ConfigError(f"lambda must be >= 1, got {self.lam}")
        if self.gamma < 1:
            raise ConfigError(f"gamma must be >= 1, got {self.gamma}")
        if self.b_total < m * self.alpha:
            raise InfeasibleBudgetError(
                f"b_total={self.b_total} cannot hold the observation window on "
                f"every layer (need >= {m} * {self.alpha} = {m * self.alpha})"
            )

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "omega": self.omega,
            "gamma": self.gamma,
            "lambda": self.lam,
            "b_total": self.b_total,
            "p_aggregation": self.p_aggregation,
            "task": self.task.value if self.task is not None else "auto",
        }


@dataclass(eq=False)
class PolicyResult:
    """Per-layer retained indices plus bookkeeping for one policy run."""

    policy: str
    index_sets: list[RetainedIndexSet]
    selection_invocations: int
    config: CompressionConfig | None = None
    task: TaskType | None = None
    plan: BudgetPlan | None = field(default=None, repr=False)

    @property
    def retained_counts(self) -> list[int]:
        return [len(s) for s in self.index_sets]


def _observation_positions(n: int, alpha: int) -> np.ndarray:
    return np.arange(n - alpha, n, dtype=np.int64)


def _token_scores(trace: AttentionTrace, layer: int, alpha: int) -> TokenScores:
    """Observation-row attention sums per review token, computed from just
    the observation-row block of head-averaged attention."""
    obs = observation_attention(trace, layer, alpha)
    scores = obs[:, : trace.seq_len - alpha].sum(axis=0)
    scores.flags.writeable = False
    return TokenScores(scores=scores, alpha=alpha, n=trace.seq_len)


def _with_observation(review_idx: np.ndarray, n: int, alpha: int) -> np.ndarray:
    return np.concatenate([review_idx, _observation_positions(n, alpha)])


def _greedy_window_fill(
    tokens: TokenScores,
    windows: list[ReviewWindow],
    window_scores: list[WindowScore],
    review_budget: int,
) -> np.ndarray:
    """Retain whole windows in descending score order until the review
    budget is spent; the final window is truncated to fit exactly, dropping
    its lowest-scoring tokens first. Ties break toward lower indices."""
    order = sorted(
        range(len(windows)),
        key=lambda i: (-window_scores[i].score, windows[i].window_index),
    )
    picked: list[np.ndarray] = []
    remaining = review_budget
    for i in order:
        if remaining <= 0:
            break
        w = windows[i]
        if w.length <= remaining:
            picked.append(np.arange(w.start, w.stop, dtype=np.int64))
            remaining -= w.length
        else:
            ranked = rank_window_tokens(w, tokens)
            picked.append(np.sort(ranked[:remaining]).astype(np.int64))
            remaining = 0
    if not picked:
        return np.empty(0, dtype=np.int64)
    return np.sort(np.concatenate(picked))


def _select_for_layer(
    trace: AttentionTrace,
    layer: int,
    config: CompressionConfig,
    task: TaskType,
    budget: int,
) -> np.ndarray:
    """One window-selection pass: score, rank, and fill one layer's budget."""
    n, alpha = trace.seq_len, config.alpha
    tokens = _token_scores(trace, layer, alpha)
    windows = partition_windows(tokens.review_len, config.omega)
    p = config.omega if task is TaskType.LOCALIZATION else config.p_aggregation
    window_scores = [score_window(w, tokens, p) for w in windows]
    review_idx = _greedy_window_fill(tokens, windows, window_scores, budget - alpha)
    return _with_observation(review_idx, n, alpha)


def windowkv_compress(
    trace: AttentionTrace,
    config: CompressionConfig,
    task: TaskType | None = None,
    *,
    share: bool = True,
) -> PolicyResult:
    """Task-adaptive window selection with intra-group index sharing.

    With sharing (the production path), selection runs once per group on the
    group's first layer and the index set is copied to the other layers.
    ``share=False`` selects independently at every layer with its own budget;
    this is the analysis path behind the similarity heatmaps.
    """
    resolved = task if task is not None else config.task
    if resolved is None:
        raise ConfigError(
            "task is unresolved: classify the prompt or set task explicitly"
        )
    config.validate_for_trace(trace)
    plan = build_plan(config.b_total, trace.num_layers, config.gamma, config.lam)
    plan.require_layer_floor(config.alpha)
    grouping = build_grouping(trace.num_layers, config.gamma)

    index_sets: list[RetainedIndexSet | None] = [None] * trace.num_layers
    invocations = 0
    if share:
        for group in grouping.groups:
            # The shared set must fit every layer in the group, so size the
            # selection to the group's smallest layer budget.
            budget = min(plan.layer_budgets[l] for l in group)
            idx = _select_for_layer(trace, group.start, config, resolved, budget)
            first = RetainedIndexSet(layer=group.start, indices=idx)
            invocations += 1
            for member in share_indices(group, first):
                index_sets[member.layer] = member
    else:
        for layer in range(trace.num_layers):
            idx = _select_for_layer(
                trace, layer, config, resolved, plan.layer_budgets[layer]
            )
            index_sets[layer] = RetainedIndexSet(layer=layer, indices=idx)
            invocations += 1

    for layer, s in enumerate(index_sets):
        s.validate(trace.seq_len, alpha=config.alpha, budget=plan.layer_budgets[layer])
    return PolicyResult(
        policy="windowkv",
        index_sets=index_sets,  # type: ignore[arg-type]
        selection_invocations=invocations,
        config=config,
        task=resolved,
        plan=plan,
    )


def _uniform_layer_budget(trace: AttentionTrace, config: CompressionConfig) -> int:
    b, rem = divmod(config.b_total, trace.num_layers)
    if rem != 0:
        raise ConfigError(
            f"uniform policies need b_total divisible by the layer count: "
            f"{config.b_total} % {trace.num_layers} = {rem}"
        )
    if b < config.alpha:
        raise InfeasibleBudgetError(
            f"per-layer budget {b} is below the observation window {config.alpha}"
        )
    return b


def slm_compress(trace: AttentionTrace, config: CompressionConfig) -> PolicyResult:
    """Initial tokens plus the observation window, identical at every layer.

    Position-only: the attention payload never influences the result.
    """
    config.validate_for_trace(trace)
    b = _uniform_layer_budget(trace, config)
    n, alpha = trace.seq_len, config.alpha
    if b >= n:
        idx = np.arange(n, dtype=np.int64)
    else:
        prefix = np.arange(b - alpha, dtype=np.int64)
        idx = _with_observation(prefix, n, alpha)
    index_sets = [RetainedIndexSet(layer=l, indices=idx) for l in range(trace.num_layers)]
    for s in index_sets:
        s.validate(n, alpha=alpha, budget=b)
    return PolicyResult(
        policy="slm", index_sets=index_sets, selection_invocations=0, config=config
    )


def h2o_compress(trace: AttentionTrace, config: CompressionConfig) -> PolicyResult:
    """Heavy hitters: top review tokens by column-mean attention over all rows."""
    config.validate_for_trace(trace)
    b = _uniform_layer_budget(trace, config)
    n, alpha = trace.seq_len, config.alpha
    review_len = n - alpha
    index_sets = []
    invocations = 0
    for layer in range(trace.num_layers):
        if b >= n:
            idx = np.arange(n, dtype=np.int64)
        else:
            col_means = layer_attention(trace, layer).mean(axis=0)[:review_len]
            order = np.lexsort((np.arange(review_len), -col_means))
            k = min(b - alpha, review_len)
            top = np.sort(order[:k]).astype(np.int64)
            idx = _with_observation(top, n, alpha)
        invocations += 1
        index_sets.append(RetainedIndexSet(layer=layer, indices=idx))
    for s in index_sets:
        s.validate(n, alpha=alpha, budget=b)
    return PolicyResult(
        policy="h2o",
        index_sets=index_sets,
        selection_invocations=invocations,
        config=config,
    )


def pkv_compress(
    trace: AttentionTrace,
    config: CompressionConfig,
    task: TaskType | None = None,
) -> PolicyResult:
    """Per-token selection under per-layer pyramid budgets (gamma = 1).

    ``task`` is accepted for interface parity with the other scored policies
    but does not influence token-level selection. Scoring uses
    observation-window rows as the stand-in for instruction tokens.
    """
    del task
    config.validate_for_trace(trace)
    plan = build_plan(config.b_total, trace.num_layers, 1, config.lam)
    plan.require_layer_floor(config.alpha)
    n, alpha = trace.seq_len, config.alpha
    review_len = n - alpha
    index_sets = []
    invocations = 0
    for layer in range(trace.num_layers):
        budget = plan.layer_budgets[layer]
        if budget >= n:
            idx = np.arange(n, dtype=np.int64)
        else:
            tokens = _token_scores(trace, layer, alpha)
            order = np.lexsort((np.arange(review_len), -tokens.scores))
            k = min(budget - alpha, review_len)
            top = np.sort(order[:k]).astype(np.int64)
            idx = _with_observation(top, n, alpha)
        invocations += 1
        index_sets.append(RetainedIndexSet(layer=layer, indices=idx))
    for layer, s in enumerate(index_sets):
        s.validate(n, alpha=alpha, budget=plan.layer_budgets[layer])
    return PolicyResult(
        policy="pkv",
        index_sets=index_sets,
        selection_invocations=invocations,
        config=config,
        plan=plan,
    )


def full_kv(trace: AttentionTrace) -> PolicyResult:
    """Retain every token at every layer; the upper-bound baseline."""
    idx = np.arange(trace.seq_len, dtype=np.int64)
    index_sets = [
        RetainedIndexSet(layer=l, indices=idx) for l in range(trace.num_layers)
    ]
    return PolicyResult(policy="fullkv", index_sets=index_sets, selection_invocations=0)


def run_policy(
    name: str,
    trace: AttentionTrace,
    config: CompressionConfig,
    task: TaskType | None = None,
) -> PolicyResult:
    """Dispatch a policy by CLI name."""
    if name == "windowkv":
        return windowkv_compress(trace, config, task)
    if name == "slm":
        return slm_compress(trace, config)
    if name == "h2o":
        return h2o_compress(trace, config)
    if name == "pkv":
        return pkv_compress(trace, config, task)
    if name == "fullkv":
        return full_kv(trace)
    raise ConfigError(f"unknown policy {name!r}, expected one of {POLICY_NAMES}")
