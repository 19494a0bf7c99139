"""Token and review-window scoring.

The last ``alpha`` positions of the prompt form the observation window; the
prefix before them is the review context. Each review token is scored by the
attention it receives from the observation rows. The review context is then
tiled into fixed-size windows, and each window is scored by the mean of its
top-p token scores, where p depends on the task type:

* information localization (question answering): p equals the window size,
  so a window's score is the plain mean and whole-window semantics dominate.
* information aggregation (summarization, code completion, few-shot): p is
  smaller, so a window is judged by its few most salient tokens.

All index ranges are half-open: observation rows are [n - alpha, n), review
columns are [0, n - alpha).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class TaskType(enum.Enum):
    LOCALIZATION = "localization"
    AGGREGATION = "aggregation"


@dataclass(frozen=True)
class TokenScores:
    """Observation-window attention received by each review token."""

    scores: np.ndarray  # float64, length n - alpha, index = token position
    alpha: int
    n: int

    @property
    def review_len(self) -> int:
        return self.n - self.alpha


@dataclass(frozen=True)
class ReviewWindow:
    window_index: int  # 1-based
    start: int
    length: int

    @property
    def stop(self) -> int:
        return self.start + self.length


@dataclass(frozen=True)
class WindowScore:
    window_index: int
    score: float


def score_tokens(attn: np.ndarray, alpha: int) -> TokenScores:
    """Sum attention from the observation rows onto each review column."""
    n = attn.shape[0]
    if attn.ndim != 2 or attn.shape[1] != n:
        raise ValueError(f"attention must be square, got shape {attn.shape}")
    if not 1 <= alpha < n:
        raise ValueError(f"alpha must satisfy 1 <= alpha < n, got alpha={alpha} n={n}")
    scores = attn[n - alpha :, : n - alpha].sum(axis=0, dtype=np.float64)
    scores.flags.writeable = False
    return TokenScores(scores=scores, alpha=alpha, n=n)


def partition_windows(review_len: int, omega: int) -> list[ReviewWindow]:
    """Tile [0, review_len) into ceil(review_len / omega) windows.

    Every window has ``omega`` tokens except possibly the last.
    """
    if review_len < 1:
        raise ValueError(f"review_len must be >= 1, got {review_len}")
    if omega < 1:
        raise ValueError(f"omega must be >= 1, got {omega}")
    windows = []
    for k, start in enumerate(range(0, review_len, omega), start=1):
        length = min(omega, review_len - start)
        windows.append(ReviewWindow(window_index=k, start=start, length=length))
    return windows


def score_window(window: ReviewWindow, scores: TokenScores, p: int) -> WindowScore:
    """Mean of the min(p, window length) largest token scores in the window.

    The divisor uses the effective count so that p larger than the window
    (or a short final window) still yields a well-defined mean.
    """
    if window.length < 1:
        raise ValueError(f"window {window.window_index} is empty")
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    vals = scores.scores[window.start : window.stop]
    effective = min(p, window.length)
    if effective == window.length:
        s = float(vals.mean())
    else:
        top = np.partition(vals, window.length - effective)[window.length - effective :]
        s = float(top.mean())
    return WindowScore(window_index=window.window_index, score=s)


def rank_window_tokens(window: ReviewWindow, scores: TokenScores) -> np.ndarray:
    """Token positions in the window ordered by descending score, ties by
    lower position."""
    vals = scores.scores[window.start : window.stop]
    positions = np.arange(window.start, window.stop)
    order = np.lexsort((positions, -vals))
    return positions[order]


def score_all_windows(
    attn: np.ndarray,
    alpha: int,
    omega: int,
    task: TaskType,
    p_aggregation: int,
) -> list[WindowScore]:
    """Score every review window with the task-appropriate p."""
    if omega > 1 and not 1 <= p_aggregation < omega:
        raise ValueError(
            f"p_aggregation must satisfy 1 <= p < omega, "
            f"got p_aggregation={p_aggregation} omega={omega}"
        )
    tokens = score_tokens(attn, alpha)
    windows = partition_windows(tokens.review_len, omega)
    p = omega if task is TaskType.LOCALIZATION else p_aggregation
    return [score_window(w, tokens, p) for w in windows]
