"""Pyramid budget allocation across layer groups.

Group budgets follow an arithmetic sequence from the bottom group (largest)
to the top group (smallest). With H groups, total budget b and pyramid shape
parameter lambda >= 1:

    top    = b / (lambda * H)
    bottom = 2 * b / H - top
    target(h) = bottom - h * (bottom - top) / (H - 1)

The real-valued targets always sum to b exactly. Integerization rounds every
target except the bottom one half-up, then lets the bottom group absorb the
residual, so the integer total is exact and the largest group carries the
rounding distortion where it is relatively smallest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError, InfeasibleBudgetError


def _half_up(x: float) -> int:
    return math.floor(x + 0.5)


def group_budget_targets(b_total: int, num_groups: int, lam: float) -> list[float]:
    """Real-valued (pre-rounding) group budgets, bottom group first."""
    if num_groups < 1:
        raise ConfigError(f"num_groups must be >= 1, got {num_groups}")
    if lam < 1.0:
        raise ConfigError(f"lambda must be >= 1, got {lam}")
    if b_total < num_groups:
        raise ConfigError(
            f"b_total={b_total} too small for {num_groups} groups (need >= 1 each)"
        )
    if num_groups == 1:
        return [float(b_total)]
    top = b_total / (lam * num_groups)
    bottom = 2.0 * b_total / num_groups - top
    step = (bottom - top) / (num_groups - 1)
    return [bottom - h * step for h in range(num_groups)]


def allocate_group_budgets(b_total: int, num_groups: int, lam: float) -> list[int]:
    """Integer group budgets summing to b_total exactly, bottom group first."""
    targets = group_budget_targets(b_total, num_groups, lam)
    if num_groups == 1:
        return [b_total]
    rest = [_half_up(t) for t in targets[1:]]
    return [b_total - sum(rest)] + rest


def distribute_to_layers(group_budgets: list[int], gamma: int) -> list[int]:
    """Spread each group budget evenly over its gamma layers.

    The first (budget mod gamma) layers of a group take one extra token, so
    each group's layer budgets sum to its group budget exactly.
    """
    if gamma < 1:
        raise ConfigError(f"gamma must be >= 1, got {gamma}")
    layers: list[int] = []
    for b in group_budgets:
        base, extra = divmod(b, gamma)
        layers.extend([base + 1] * extra + [base] * (gamma - extra))
    return layers


@dataclass(frozen=True)
class BudgetPlan:
    """Integer budgets at group and layer granularity, conserving the total."""

    total: int
    num_groups: int
    lam: float
    gamma: int
    group_budgets: tuple[int, ...]
    layer_budgets: tuple[int, ...]

    @property
    def num_layers(self) -> int:
        return len(self.layer_budgets)

    def require_layer_floor(self, floor: int) -> None:
        """Reject the plan if any layer cannot hold ``floor`` tokens."""
        for layer, b in enumerate(self.layer_budgets):
            if b < floor:
                raise InfeasibleBudgetError(
                    f"layer {layer} budget {b} is below the observation-window "
                    f"floor {floor}; raise the total budget or flatten lambda"
                )


def build_plan(b_total: int, num_layers: int, gamma: int, lam: float) -> BudgetPlan:
    """Allocate group budgets and distribute them to layers."""
    if gamma < 1:
        raise ConfigError(f"gamma must be >= 1, got {gamma}")
    if num_layers < 1 or num_layers % gamma != 0:
        raise ConfigError(
            f"gamma={gamma} must divide the layer count {num_layers} exactly"
        )
    num_groups = num_layers // gamma
    groups = allocate_group_budgets(b_total, num_groups, lam)
    layers = distribute_to_layers(groups, gamma)
    return BudgetPlan(
        total=b_total,
        num_groups=num_groups,
        lam=lam,
        gamma=gamma,
        group_budgets=tuple(groups),
        layer_budgets=tuple(layers),
    )


def per_layer_kv_size_to_total(kv_size_per_layer: int, num_layers: int) -> int:
    """Convert the per-layer "KV size" convention to a model-wide total."""
    if kv_size_per_layer < 1:
        raise ConfigError(f"kv size per layer must be >= 1, got {kv_size_per_layer}")
    return kv_size_per_layer * num_layers
