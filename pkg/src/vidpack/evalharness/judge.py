"""Judge clients and bounded-concurrency judging of QA items."""

from __future__ import annotations

import json
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from .dataset import QAItem
from .parsing import Judgement, JudgeParseError, parse_judge_response
from .prompts import render_judge_prompts

log = logging.getLogger(__name__)

MAX_RETRIES = 2
DEFAULT_MODEL = "gpt-3.5-turbo"


class JudgeTransportError(RuntimeError):
    """The judge could not be reached or answered with something unusable."""


class JudgeConfigError(RuntimeError):
    pass


class JudgeClient(Protocol):
    def complete(self, system_prompt: str, user_prompt: str, item_id: str, index: int) -> str: ...


class StubJudge:
    """Scripted judge for hermetic runs.

    ``script`` is either a list (entry ``i`` answers the ``i``-th item) or a
    mapping from item id to entry, with an optional ``"*"`` fallback. An entry
    is a reply string, or a list of per-attempt replies where ``None`` stands
    for a transport failure. The last attempt entry repeats once exhausted.
    """

    def __init__(self, script):
        self.script = script
        self._attempts: dict[int, int] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "StubJudge":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def _entry(self, item_id: str, index: int):
        if isinstance(self.script, list):
            if index >= len(self.script):
                raise JudgeTransportError(f"stub script has no entry for item {index}")
            return self.script[index]
        if item_id in self.script:
            return self.script[item_id]
        if "*" in self.script:
            return self.script["*"]
        raise JudgeTransportError(f"stub script has no entry for item {item_id!r}")

    def complete(self, system_prompt: str, user_prompt: str, item_id: str = "", index: int = 0) -> str:
        entry = self._entry(item_id, index)
        with self._lock:
            attempt = self._attempts.get(index, 0)
            self._attempts[index] = attempt + 1
        if isinstance(entry, list):
            entry = entry[min(attempt, len(entry) - 1)] if entry else None
        if entry is None:
            raise JudgeTransportError(f"scripted transport failure for item {item_id!r}")
        return entry


class HttpJudge:
    """Minimal chat-completion client.

    POSTs ``{"model", "messages": [system, user], "temperature": 0}`` with a
    bearer token and reads ``choices[0].message.content`` from the reply.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        model: str = DEFAULT_MODEL,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(headers=headers, timeout=timeout, transport=transport)

    @classmethod
    def from_env(cls, **kwargs) -> "HttpJudge":
        endpoint = os.environ.get("JUDGE_ENDPOINT", "").strip()
        if not endpoint:
            raise JudgeConfigError("JUDGE_ENDPOINT is not set")
        return cls(
            endpoint,
            os.environ.get("JUDGE_API_KEY", "").strip() or None,
            os.environ.get("JUDGE_MODEL", "").strip() or DEFAULT_MODEL,
            **kwargs,
        )

    def complete(self, system_prompt: str, user_prompt: str, item_id: str = "", index: int = 0) -> str:
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_prompt},
            ],
            "temperature": 0,
        }
        try:
            resp = self._client.post(self.endpoint, json=body)
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]
        except httpx.HTTPError as exc:
            raise JudgeTransportError(f"judge request failed: {exc}") from exc
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise JudgeTransportError(f"unexpected judge reply: {exc}") from exc

    def close(self) -> None:
        self._client.close()


@dataclass(frozen=True)
class ItemResult:
    item_id: str
    judgement: Judgement | None = None
    error: str | None = None
    error_kind: str | None = None  # "transport" | "parse"
    attempts: int = 1

    @property
    def ok(self) -> bool:
        return self.judgement is not None

    def to_dict(self) -> dict:
        d = {"id": self.item_id, "attempts": self.attempts}
        if self.judgement is not None:
            d.update(self.judgement.to_dict())
        else:
            d.update({"error": self.error, "error_kind": self.error_kind})
        return d


def judge_one(item: QAItem, index: int, client: JudgeClient, max_retries: int = MAX_RETRIES) -> ItemResult:
    system, user = render_judge_prompts(item)
    last = None
    for attempt in range(1, max_retries + 2):
        try:
            reply = client.complete(system, user, item.id, index)
        except JudgeTransportError as exc:
            last = exc
            log.warning("item %s attempt %d: %s", item.id, attempt, exc)
            continue
        try:
            return ItemResult(item.id, parse_judge_response(reply), attempts=attempt)
        except JudgeParseError as exc:
            return ItemResult(item.id, None, f"{type(exc).__name__}: {exc}", "parse", attempt)
    return ItemResult(item.id, None, str(last), "transport", max_retries + 1)


def judge_items(
    items: Sequence[QAItem], client: JudgeClient, parallelism: int = 4
) -> list[ItemResult]:
    """Judge every item once, with at most ``parallelism`` requests in flight.

    Results come back in input order whatever order the requests finish in.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = [pool.submit(judge_one, item, i, client) for i, item in enumerate(items)]
        return [f.result() for f in futures]
