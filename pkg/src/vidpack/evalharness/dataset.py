"""QA dataset schema and loader."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class DatasetError(ValueError):
    pass


class SchemaError(DatasetError):
    def __init__(self, message: str, index: int | None = None):
        self.index = index
        super().__init__(f"item {index}: {message}" if index is not None else message)


class DuplicateIdError(DatasetError):
    pass


@dataclass(frozen=True)
class QAItem:
    id: str
    question: str
    gold_answer: str
    prediction: str
    options: tuple[str, ...] | None = None
    gold_option_index: int | None = None

    def __post_init__(self) -> None:
        if (self.options is None) != (self.gold_option_index is None):
            raise ValueError("options and gold_option_index must be given together")
        if self.options is not None:
            if len(self.options) < 2:
                raise ValueError("multiple-choice items need at least 2 options")
            if not 0 <= self.gold_option_index < len(self.options):
                raise ValueError(
                    f"gold_option_index {self.gold_option_index} out of range for "
                    f"{len(self.options)} options"
                )

    @property
    def is_mcq(self) -> bool:
        return self.options is not None


_REQUIRED = ("id", "question", "answer", "prediction")


def item_from_dict(obj, index: int) -> QAItem:
    if not isinstance(obj, dict):
        raise SchemaError("expected an object", index)
    for key in _REQUIRED:
        if key not in obj:
            raise SchemaError(f"missing key {key!r}", index)
        if not isinstance(obj[key], str):
            raise SchemaError(f"{key!r} must be a string", index)
    options = obj.get("options")
    gold = obj.get("gold_option_index")
    if options is not None:
        if not isinstance(options, list) or not all(isinstance(o, str) for o in options):
            raise SchemaError("'options' must be a list of strings", index)
        options = tuple(options)
    if gold is not None and (not isinstance(gold, int) or isinstance(gold, bool)):
        raise SchemaError("'gold_option_index' must be an integer", index)
    try:
        return QAItem(obj["id"], obj["question"], obj["answer"], obj["prediction"], options, gold)
    except ValueError as exc:
        raise SchemaError(str(exc), index) from None


def parse_qa_dataset(data) -> list[QAItem]:
    if not isinstance(data, list):
        raise SchemaError("dataset must be a JSON array")
    items = []
    seen: set[str] = set()
    for i, obj in enumerate(data):
        item = item_from_dict(obj, i)
        if item.id in seen:
            raise DuplicateIdError(f"item {i}: duplicate id {item.id!r}")
        seen.add(item.id)
        items.append(item)
    return items


def load_qa_dataset(path: str | Path) -> list[QAItem]:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from None
    return parse_qa_dataset(data)
