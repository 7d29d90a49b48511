"""Parsing of judge replies into verdicts."""

from __future__ import annotations

import ast
import json
import math
import re
from dataclasses import dataclass

_MAP_RE = re.compile(r"\{[^{}]*\}", re.DOTALL)


class JudgeParseError(ValueError):
    pass


class NoMapFoundError(JudgeParseError):
    pass


class MissingKeyError(JudgeParseError):
    pass


class NonNumericScoreError(JudgeParseError):
    pass


class UnrecognizedPredError(JudgeParseError):
    pass


@dataclass(frozen=True)
class Judgement:
    pred: str  # "yes" | "no"
    score: float

    def __post_init__(self) -> None:
        if self.pred not in ("yes", "no"):
            raise ValueError(f"pred must be 'yes' or 'no', got {self.pred!r}")
        if not 0.0 <= self.score <= 5.0:
            raise ValueError(f"score {self.score} outside [0, 5]")

    @property
    def correct(self) -> bool:
        return self.pred == "yes"

    def to_dict(self) -> dict:
        return {"pred": self.pred, "score": self.score}


def _load_map(fragment: str) -> dict:
    try:
        obj = ast.literal_eval(fragment)
    except (ValueError, SyntaxError):
        try:
            obj = json.loads(fragment)
        except json.JSONDecodeError:
            raise NoMapFoundError(f"could not parse {fragment!r} as a map") from None
    if not isinstance(obj, dict):
        raise NoMapFoundError(f"{fragment!r} is not a map")
    return obj


def parse_judge_response(text: str) -> Judgement:
    """Extract ``{'pred': ..., 'score': ...}`` from a raw judge reply.

    Integer and decimal scores are both accepted and clamped to [0, 5].
    """
    m = _MAP_RE.search(text)
    if m is None:
        raise NoMapFoundError("no brace-delimited map in judge response")
    obj = _load_map(m.group())
    for key in ("pred", "score"):
        if key not in obj:
            raise MissingKeyError(f"judge response lacks {key!r}")
    pred = obj["pred"]
    if not isinstance(pred, str) or pred.strip().lower() not in ("yes", "no"):
        raise UnrecognizedPredError(f"pred {pred!r} is neither yes nor no")
    raw = obj["score"]
    if isinstance(raw, bool):
        raise NonNumericScoreError(f"score {raw!r} is not a number")
    try:
        score = float(raw)
    except (TypeError, ValueError):
        raise NonNumericScoreError(f"score {raw!r} is not a number") from None
    if math.isnan(score):
        raise NonNumericScoreError("score is NaN")
    return Judgement(pred.strip().lower(), min(5.0, max(0.0, score)))
