"""Judge prompts for open-ended video QA, with ``{question}``/``{answer}``/``{pred}`` slots."""

from __future__ import annotations

import re

from .dataset import QAItem

SYSTEM_PROMPT = (
    "You are an intelligent chatbot designed for evaluating the correctness of generative "
    "outputs for question-answer pairs.\n"
    "Your task is to compare the predicted answer with the correct answer and determine if "
    "they match meaningfully. Here's how you can accomplish the task:\n"
    "INSTRUCTIONS:\n"
    "- Focus on the meaningful match between the predicted answer and the correct answer.\n"
    "- Consider synonyms or paraphrases as valid matches.\n"
    "- Evaluate the correctness of the prediction compared to the answer."
)

USER_PROMPT_TEMPLATE = (
    "Please evaluate the following video-based question-answer pair:\n"
    "Question: {question}\n"
    "Correct Answer: {answer}\n"
    "Predicted Answer: {pred}\n"
    "Provide your evaluation only as a yes/no and score where the score is an integer value "
    "between 0 and 5, with 5 indicating the highest meaningful match. Please generate the "
    "response in the form of a Python dictionary string with keys 'pred' and 'score', where "
    "the value of 'pred' is a string of 'yes' or 'no' and the value of 'score' is an INTEGER, "
    "not STRING. DO NOT PROVIDE ANY OTHER OUTPUT TEXT OR EXPLANATION. Only provide the Python "
    "dictionary string. For example, your response should look like this: "
    "{'pred': 'yes', 'score': 4.8}."
)

_SLOT_RE = re.compile(r"\{(question|answer|pred)\}")


class WrongItemKindError(ValueError):
    pass


def render_user_prompt(question: str, answer: str, pred: str) -> str:
    # single pass, so braces inside the substituted values are never re-expanded
    values = {"question": question, "answer": answer, "pred": pred}
    return _SLOT_RE.sub(lambda m: values[m.group(1)], USER_PROMPT_TEMPLATE)


def render_judge_prompts(item: QAItem) -> tuple[str, str]:
    if item.is_mcq:
        raise WrongItemKindError(f"item {item.id!r} is multiple-choice; judge prompts are open-ended only")
    return SYSTEM_PROMPT, render_user_prompt(item.question, item.gold_answer, item.prediction)
