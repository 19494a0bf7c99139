"""Layer grouping, index sharing, and Jaccard similarity analysis.

Consecutive layers are partitioned into groups of gamma. Within a group,
selection runs once on the first layer and the resulting token indices are
copied to every other layer, cutting selection work from m invocations to
m / gamma. The Jaccard analysis quantifies how much is lost by sharing: it
compares the indices layers would have chosen independently, within and
across groups.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class LayerGrouping:
    num_layers: int
    gamma: int
    groups: tuple[range, ...]

    @property
    def num_groups(self) -> int:
        return len(self.groups)

    def group_of(self, layer: int) -> int:
        return layer // self.gamma


def build_grouping(num_layers: int, gamma: int) -> LayerGrouping:
    """Split [0, num_layers) into contiguous groups of exactly gamma layers."""
    if gamma < 1:
        raise ConfigError(f"gamma must be >= 1, got {gamma}")
    if num_layers < 1 or num_layers % gamma != 0:
        raise ConfigError(
            f"gamma={gamma} must divide the layer count {num_layers} exactly"
        )
    groups = tuple(
        range(start, start + gamma) for start in range(0, num_layers, gamma)
    )
    return LayerGrouping(num_layers=num_layers, gamma=gamma, groups=groups)


@dataclass(eq=False)
class RetainedIndexSet:
    """Strictly increasing token positions surviving compression at one layer."""

    layer: int
    indices: np.ndarray  # int64, strictly increasing

    def __post_init__(self) -> None:
        arr = np.asarray(self.indices, dtype=np.int64)
        if arr.ndim != 1:
            raise ValueError("indices must be one-dimensional")
        if arr.size > 1 and not np.all(np.diff(arr) > 0):
            raise ValueError("indices must be strictly increasing (no duplicates)")
        arr.flags.writeable = False
        object.__setattr__(self, "indices", arr)

    def __len__(self) -> int:
        return int(self.indices.size)

    def as_set(self) -> set[int]:
        return set(int(i) for i in self.indices)

    def validate(
        self,
        seq_len: int,
        alpha: int | None = None,
        budget: int | None = None,
    ) -> None:
        if self.indices.size and (
            self.indices[0] < 0 or self.indices[-1] >= seq_len
        ):
            raise ValueError(f"layer {self.layer} indices out of range [0, {seq_len})")
        if alpha is not None:
            window = np.arange(seq_len - alpha, seq_len, dtype=np.int64)
            if not np.isin(window, self.indices).all():
                raise ValueError(
                    f"layer {self.layer} is missing observation-window positions"
                )
        if budget is not None and self.indices.size > budget:
            raise ValueError(
                f"layer {self.layer} retains {self.indices.size} > budget {budget}"
            )


def share_indices(
    group: range, first_layer_indices: RetainedIndexSet
) -> list[RetainedIndexSet]:
    """Copy the group's first-layer index set to every layer in the group."""
    if first_layer_indices.layer != group.start:
        raise ValueError(
            f"index set belongs to layer {first_layer_indices.layer}, "
            f"expected the group's first layer {group.start}"
        )
    return [
        RetainedIndexSet(layer=layer, indices=first_layer_indices.indices)
        for layer in group
    ]


def jaccard(a: Iterable[int] | np.ndarray, b: Iterable[int] | np.ndarray) -> float:
    """|a intersect b| / |a union b|."""
    a_arr = np.asarray(sorted(a) if not isinstance(a, np.ndarray) else a, dtype=np.int64)
    b_arr = np.asarray(sorted(b) if not isinstance(b, np.ndarray) else b, dtype=np.int64)
    union = np.union1d(a_arr, b_arr)
    if union.size == 0:
        raise ValueError("Jaccard similarity of two empty sets is undefined")
    inter = np.intersect1d(a_arr, b_arr, assume_unique=True)
    return float(inter.size / union.size)


def intra_group_similarity(
    index_sets: Sequence[RetainedIndexSet], grouping: LayerGrouping
) -> list[np.ndarray]:
    """Per-group gamma x gamma Jaccard matrices over per-layer index sets.

    Expects one index set per layer, in layer order. The matrices are
    symmetric with unit diagonal.
    """
    if len(index_sets) != grouping.num_layers:
        raise ValueError(
            f"need one index set per layer: got {len(index_sets)}, "
            f"expected {grouping.num_layers}"
        )
    for layer, s in enumerate(index_sets):
        if s.layer != layer:
            raise ValueError(f"index set at position {layer} is labeled {s.layer}")
    matrices = []
    for group in grouping.groups:
        g = grouping.gamma
        mat = np.ones((g, g), dtype=np.float64)
        for i in range(g):
            for j in range(i + 1, g):
                v = jaccard(index_sets[group[i]].indices, index_sets[group[j]].indices)
                mat[i, j] = v
                mat[j, i] = v
        matrices.append(mat)
    return matrices


def mean_intra_group_jaccard(matrices: Sequence[np.ndarray]) -> float:
    """Mean of the off-diagonal cells across all group matrices."""
    vals: list[float] = []
    for mat in matrices:
        g = mat.shape[0]
        for i in range(g):
            for j in range(g):
                if i != j:
                    vals.append(float(mat[i, j]))
    if not vals:
        raise ValueError("no off-diagonal cells (gamma=1 has nothing to compare)")
    return float(np.mean(vals))


def mean_cross_group_jaccard(
    index_sets: Sequence[RetainedIndexSet], grouping: LayerGrouping
) -> float:
    """Mean Jaccard over all layer pairs that live in different groups."""
    vals: list[float] = []
    for i in range(len(index_sets)):
        for j in range(i + 1, len(index_sets)):
            if grouping.group_of(i) != grouping.group_of(j):
                vals.append(jaccard(index_sets[i].indices, index_sets[j].indices))
    if not vals:
        raise ValueError("a single group has no cross-group pairs")
    return float(np.mean(vals))


def format_heatmap_csv(matrix: np.ndarray) -> str:
    """Render one group's similarity matrix as CSV with 6 decimal places."""
    lines = [",".join(f"{v:.6f}" for v in row) for row in matrix]
    return "\n".join(lines) + "\n"
