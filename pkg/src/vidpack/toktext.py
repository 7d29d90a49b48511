"""Byte-level toy tokenizer with reserved special tokens.

Ids 0..9 are the special markers below, in order; every other id is a raw
UTF-8 byte shifted by ``BYTE_OFFSET``.

====  =============
id    token
====  =============
0     ``<s>``
1     ``</s>``
2     ``[INST]``
3     ``[/INST]``
4     ``<Img>``
5     ``<Sub>``
6     ``<pad>``
7     ``<unk>``
8     ``<reserved0>``
9     ``<reserved1>``
10+b  byte ``b``
====  =============
"""

from __future__ import annotations

import re
from typing import Iterable

SPECIALS: tuple[str, ...] = (
    "<s>", "</s>", "[INST]", "[/INST]", "<Img>", "<Sub>",
    "<pad>", "<unk>", "<reserved0>", "<reserved1>",
)
SPECIAL_IDS: dict[str, int] = {tok: i for i, tok in enumerate(SPECIALS)}
BYTE_OFFSET = len(SPECIALS)
VOCAB_SIZE = BYTE_OFFSET + 256

BOS, EOS, INST, INST_END, IMG, SUB, PAD, UNK = range(8)

# longest-first so no special can shadow a longer one sharing its prefix
_SPECIAL_RE = re.compile(
    "|".join(re.escape(s) for s in sorted(SPECIALS, key=len, reverse=True))
)


class InvalidTokenIdError(ValueError):
    pass


def tokenize(text: str, allow_specials: bool = True) -> list[int]:
    """Encode ``text``; with ``allow_specials=False`` marker strings stay plain bytes."""
    if not allow_specials:
        return [b + BYTE_OFFSET for b in text.encode("utf-8")]
    ids: list[int] = []
    pos = 0
    for m in _SPECIAL_RE.finditer(text):
        ids.extend(b + BYTE_OFFSET for b in text[pos:m.start()].encode("utf-8"))
        ids.append(SPECIAL_IDS[m.group()])
        pos = m.end()
    ids.extend(b + BYTE_OFFSET for b in text[pos:].encode("utf-8"))
    return ids


def detokenize(ids: Iterable[int]) -> str:
    parts: list[str] = []
    buf = bytearray()
    for i in ids:
        if not isinstance(i, int) or i < 0 or i >= VOCAB_SIZE:
            raise InvalidTokenIdError(f"token id {i!r} outside vocabulary of {VOCAB_SIZE}")
        if i >= BYTE_OFFSET:
            buf.append(i - BYTE_OFFSET)
            continue
        if buf:
            parts.append(buf.decode("utf-8", errors="replace"))
            buf.clear()
        parts.append(SPECIALS[i])
    if buf:
        parts.append(buf.decode("utf-8", errors="replace"))
    return "".join(parts)


def count_tokens(text: str) -> int:
    return len(tokenize(text))


def is_special(token_id: int) -> bool:
    return 0 <= token_id < BYTE_OFFSET
