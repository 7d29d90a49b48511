"""LLM-as-judge evaluation: prompts, reply parsing, judging and metrics."""

from .dataset import (
    DuplicateIdError,
    QAItem,
    SchemaError,
    load_qa_dataset,
    parse_qa_dataset,
)
from .judge import (
    HttpJudge,
    ItemResult,
    JudgeClient,
    JudgeConfigError,
    JudgeTransportError,
    StubJudge,
    judge_items,
)
from .metrics import EvalReport, compute_report, match_option, score_mcq
from .parsing import (
    Judgement,
    JudgeParseError,
    MissingKeyError,
    NoMapFoundError,
    NonNumericScoreError,
    UnrecognizedPredError,
    parse_judge_response,
)
from .prompts import (
    SYSTEM_PROMPT,
    USER_PROMPT_TEMPLATE,
    WrongItemKindError,
    render_judge_prompts,
)

__all__ = [
    "DuplicateIdError", "EvalReport", "HttpJudge", "ItemResult", "JudgeClient",
    "JudgeConfigError", "JudgeParseError", "JudgeTransportError", "Judgement",
    "MissingKeyError", "NoMapFoundError", "NonNumericScoreError", "QAItem",
    "SYSTEM_PROMPT", "SchemaError", "StubJudge", "USER_PROMPT_TEMPLATE",
    "UnrecognizedPredError", "WrongItemKindError", "compute_report", "judge_items",
    "load_qa_dataset", "match_option", "parse_judge_response", "parse_qa_dataset",
    "render_judge_prompts", "score_mcq",
]
