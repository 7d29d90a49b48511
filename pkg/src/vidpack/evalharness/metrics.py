"""Accuracy / score aggregation for judged and multiple-choice items."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

from .dataset import QAItem
from .judge import ItemResult
from .parsing import Judgement

_LETTERS = "ABCDE"
# "B", "(B)", "B)", "B.", "B:" optionally followed by text; "A dog" is not a letter answer
_LETTER_RE = re.compile(r"^\(?([A-E])(?:[).:]|$)")


@dataclass(frozen=True)
class EvalReport:
    n: int
    accuracy: float | None
    mean_score: float | None
    failures: int
    per_item: list[dict] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.accuracy is not None and not 0.0 <= self.accuracy <= 100.0:
            raise ValueError("accuracy outside [0, 100]")
        if self.mean_score is not None and not 0.0 <= self.mean_score <= 5.0:
            raise ValueError("mean_score outside [0, 5]")

    @property
    def judged(self) -> int:
        return self.n - self.failures

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "accuracy": self.accuracy,
            "mean_score": self.mean_score,
            "failures": self.failures,
            "per_item": self.per_item,
        }


def compute_report(results: Sequence[ItemResult | Judgement | None]) -> EvalReport:
    """Accuracy is the percentage of "yes" verdicts; failures sit outside both means.

    Bare ``Judgement`` values and ``None`` (a failure) are accepted as well.
    Metrics are ``None`` when nothing could be judged.
    """
    judgements: list[Judgement] = []
    failures = 0
    per_item = []
    for i, r in enumerate(results):
        if isinstance(r, ItemResult):
            per_item.append(r.to_dict())
            r = r.judgement
        else:
            per_item.append({"index": i, **(r.to_dict() if r else {"error": "failed"})})
        if r is None:
            failures += 1
        else:
            judgements.append(r)
    if not judgements:
        return EvalReport(len(results), None, None, failures, per_item)
    yes = sum(j.correct for j in judgements)
    accuracy = 100.0 * yes / len(judgements)
    mean_score = sum(j.score for j in judgements) / len(judgements)
    return EvalReport(len(results), accuracy, min(5.0, mean_score), failures, per_item)


def match_option(prediction: str, options: Sequence[str]) -> int | None:
    """Letter prefix first, then case-insensitive option-text containment.

    With several contained options the longest wins, ties to the earliest.
    """
    pred = prediction.strip()
    m = _LETTER_RE.match(pred)
    if m is not None:
        idx = _LETTERS.index(m.group(1))
        if idx < len(options):
            return idx
    low = pred.lower()
    best = None
    for i, opt in enumerate(options):
        o = opt.strip().lower()
        if o and o in low and (best is None or len(o) > len(options[best].strip())):
            best = i
    return best


def score_mcq(items: Sequence[QAItem]) -> EvalReport:
    per_item = []
    correct = 0
    for item in items:
        if not item.is_mcq:
            raise ValueError(f"item {item.id!r} is not multiple-choice")
        chosen = match_option(item.prediction, item.options)
        hit = chosen == item.gold_option_index
        correct += hit
        per_item.append({"id": item.id, "chosen": chosen, "correct": hit})
    accuracy = 100.0 * correct / len(items) if items else None
    return EvalReport(len(items), accuracy, None, 0, per_item)
