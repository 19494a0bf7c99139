"""Task-type classification.

The selection pipeline needs to know whether a prompt is an information
localization task (question answering: whole passages matter) or an
information aggregation task (summarization, few-shot exemplars, code
completion: only the salient parts of each window matter). The default
implementation is a deterministic weighted rule table. It sits behind a
small interface so a learned classifier can replace it without touching
policy code; classification runs once per request, never per layer.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Protocol

from .errors import ConfigError
from .scoring import TaskType

_FEW_SHOT_LINE = re.compile(
    r"(?im)^[ \t]*(?:q|a|question|answer|example|input|output|type|dialogue|summary)"
    r"[ \t]*\d*[ \t]*:"
)
_CODE_KEYWORD = re.compile(
    r"\b(?:def |class |function |return |import |#include|public |private )"
)
_INTERROGATIVE = re.compile(r"\b(?:who|whom|whose|what|when|where|why|which)\b")
_SUMMARIZE = re.compile(r"\bsummar")
_REPORT = re.compile(r"\breports?\b")

_CODE_TAILS = ("{", "(", ":", "=>", "->", ",")


def _few_shot(text: str) -> bool:
    return len(_FEW_SHOT_LINE.findall(text)) >= 4


def _unclosed_code(text: str) -> bool:
    if text.count("```") % 2 == 1:
        return True
    stripped = text.rstrip()
    return bool(_CODE_KEYWORD.search(text)) and stripped.endswith(_CODE_TAILS)


def _trailing_question(text: str) -> bool:
    return "?" in text.rstrip()[-64:]


@dataclass(frozen=True)
class _Rule:
    rule_id: str
    side: TaskType
    weight: int
    predicate: Callable[[str], bool]


_RULES: tuple[_Rule, ...] = (
    _Rule("summarize", TaskType.AGGREGATION, 2, lambda t: bool(_SUMMARIZE.search(t))),
    _Rule("report", TaskType.AGGREGATION, 1, lambda t: bool(_REPORT.search(t))),
    _Rule(
        "write_a",
        TaskType.AGGREGATION,
        1,
        lambda t: "write a " in t or "write an " in t,
    ),
    _Rule("few_shot_exemplars", TaskType.AGGREGATION, 4, _few_shot),
    _Rule("unclosed_code", TaskType.AGGREGATION, 3, _unclosed_code),
    _Rule("trailing_question", TaskType.LOCALIZATION, 2, _trailing_question),
    _Rule(
        "interrogative_word",
        TaskType.LOCALIZATION,
        1,
        lambda t: bool(_INTERROGATIVE.search(t)),
    ),
    _Rule(
        "answer_the_question",
        TaskType.LOCALIZATION,
        2,
        lambda t: "answer the question" in t or "answer the following question" in t,
    ),
)


@dataclass(frozen=True)
class ClassifierDecision:
    task: TaskType
    confidence: float
    matched_rules: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "task": self.task.value,
            "confidence": self.confidence,
            "matched_rules": list(self.matched_rules),
        }


class TaskClassifier(Protocol):
    def classify(self, prompt_text: str) -> ClassifierDecision: ...


class HeuristicClassifier:
    """Weighted keyword and structure votes; ties resolve to localization.

    Localization is the safer default: with p = omega whole windows are
    retained, which loses strictly less than top-p sub-selection when the
    task is uncertain.
    """

    def classify(self, prompt_text: str) -> ClassifierDecision:
        if not prompt_text or not prompt_text.strip():
            raise ConfigError("cannot classify empty prompt text")
        lowered = prompt_text.lower()
        matched: list[str] = []
        votes = {TaskType.LOCALIZATION: 0, TaskType.AGGREGATION: 0}
        for rule in _RULES:
            if rule.predicate(lowered):
                matched.append(rule.rule_id)
                votes[rule.side] += rule.weight
        loc, agg = votes[TaskType.LOCALIZATION], votes[TaskType.AGGREGATION]
        total = loc + agg
        task = TaskType.AGGREGATION if agg > loc else TaskType.LOCALIZATION
        confidence = 0.5 if total == 0 else 0.5 + 0.5 * abs(loc - agg) / total
        return ClassifierDecision(
            task=task, confidence=confidence, matched_rules=tuple(matched)
        )


_DEFAULT = HeuristicClassifier()


def classify(prompt_text: str) -> ClassifierDecision:
    return _DEFAULT.classify(prompt_text)


def classify_or_override(prompt_text: str | None, config) -> TaskType:
    """Config task wins when set; otherwise defer to the classifier."""
    if config.task is not None:
        return config.task
    if prompt_text is None:
        raise ConfigError("task=auto needs prompt text to classify")
    return classify(prompt_text).task


def load_fixture_prompts() -> list[tuple[str, TaskType]]:
    """Bundled labeled prompts used as the classifier's regression fence."""
    raw = resources.files("windowkv.data").joinpath("classifier_fixtures.json")
    entries = json.loads(raw.read_text(encoding="utf-8"))
    return [(e["text"], TaskType(e["label"])) for e in entries]
