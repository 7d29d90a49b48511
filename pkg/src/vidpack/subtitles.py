"""SRT / WebVTT parsing and subtitle-to-frame alignment."""

from __future__ import annotations

import html
import re
from dataclasses import dataclass
from typing import Callable, Sequence

_SRT_TIME = r"(\d+):(\d{2}):(\d{2}),(\d{3})"
_SRT_TIMING_RE = re.compile(rf"^\s*{_SRT_TIME}\s*-->\s*{_SRT_TIME}\s*$")
_VTT_TIME = r"(?:(\d+):)?(\d{2}):(\d{2})\.(\d{3})"
_VTT_TIMING_RE = re.compile(rf"^\s*{_VTT_TIME}\s*-->\s*{_VTT_TIME}(?:\s+.*)?$")
_TAG_RE = re.compile(r"<[^>]*>")
_WS_RE = re.compile(r"\s+")
_LOOKAHEAD = 32


class SubtitleParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class MissingHeaderError(SubtitleParseError):
    pass


@dataclass(frozen=True)
class SubtitleCue:
    index: int
    start_ms: int
    end_ms: int
    text: str

    def __post_init__(self) -> None:
        if not 0 <= self.start_ms < self.end_ms:
            raise ValueError(f"cue needs 0 <= start < end, got {self.start_ms}..{self.end_ms}")
        if not self.text.strip():
            raise ValueError("cue text is empty")

    def to_dict(self) -> dict:
        return {"index": self.index, "start_ms": self.start_ms,
                "end_ms": self.end_ms, "text": self.text}


def _to_ms(h: str | None, m: str, s: str, ms: str) -> int:
    return ((int(h or 0) * 60 + int(m)) * 60 + int(s)) * 1000 + int(ms)


def _clean_text(lines: list[str], unescape: bool = False) -> str:
    text = " ".join(_TAG_RE.sub("", ln) for ln in lines)
    if unescape:
        text = html.unescape(text)
    return _WS_RE.sub(" ", text).strip()


def _blocks(content: str) -> list[list[tuple[int, str]]]:
    """Split into blank-line separated blocks of (1-based line number, text)."""
    if content.startswith("\ufeff"):
        content = content[1:]
    blocks: list[list[tuple[int, str]]] = []
    cur: list[tuple[int, str]] = []
    for n, line in enumerate(content.replace("\r\n", "\n").replace("\r", "\n").split("\n"), 1):
        if line.strip():
            cur.append((n, line.rstrip()))
        elif cur:
            blocks.append(cur)
            cur = []
    if cur:
        blocks.append(cur)
    return blocks


def _finish(raw: list[tuple[int, int, str]]) -> list[SubtitleCue]:
    raw = sorted((c for c in raw if c[2]), key=lambda c: c[0])
    return [SubtitleCue(i, s, e, t) for i, (s, e, t) in enumerate(raw)]


def _checked_span(start: int, end: int, line: int) -> tuple[int, int]:
    if end <= start:
        raise SubtitleParseError(f"cue ends ({end} ms) before it starts ({start} ms)", line)
    return start, end


def parse_srt(content: str) -> list[SubtitleCue]:
    raw: list[tuple[int, int, str]] = []
    for block in _blocks(content):
        lines = list(block)
        # the numeric counter line is optional and discarded
        if "-->" not in lines[0][1]:
            if not lines[0][1].strip().isdigit():
                raise SubtitleParseError(
                    f"expected cue number or timecode, got {lines[0][1]!r}", lines[0][0])
            lines = lines[1:]
            if not lines:
                raise SubtitleParseError("cue number without timecode", block[0][0])
        lineno, timing = lines[0]
        m = _SRT_TIMING_RE.match(timing)
        if m is None:
            raise SubtitleParseError(f"malformed timecode {timing!r}", lineno)
        g = m.groups()
        start, end = _checked_span(_to_ms(*g[:4]), _to_ms(*g[4:]), lineno)
        raw.append((start, end, _clean_text([t for _, t in lines[1:]])))
    return _finish(raw)


def parse_vtt(content: str) -> list[SubtitleCue]:
    blocks = _blocks(content)
    if not blocks:
        raise MissingHeaderError("missing WEBVTT header", 1)
    header_line, header = blocks[0][0]
    if not (header == "WEBVTT" or header.startswith(("WEBVTT ", "WEBVTT\t"))):
        raise MissingHeaderError("missing WEBVTT header", header_line)
    raw: list[tuple[int, int, str]] = []
    for block in blocks[1:]:
        first = block[0][1]
        if first.startswith(("NOTE", "STYLE", "REGION")) and "-->" not in first:
            continue
        lines = block if "-->" in first else block[1:]  # drop optional cue identifier
        if not lines:
            raise SubtitleParseError(f"cue identifier without timecode: {first!r}", block[0][0])
        lineno, timing = lines[0]
        m = _VTT_TIMING_RE.match(timing)
        if m is None:
            raise SubtitleParseError(f"malformed timecode {timing!r}", lineno)
        g = m.groups()
        start, end = _checked_span(_to_ms(*g[:4]), _to_ms(*g[4:]), lineno)
        raw.append((start, end, _clean_text([t for _, t in lines[1:]], unescape=True)))
    return _finish(raw)


def parse_subtitles(content: str, fmt: str) -> list[SubtitleCue]:
    if fmt == "srt":
        return parse_srt(content)
    if fmt == "vtt":
        return parse_vtt(content)
    raise ValueError(f"unknown subtitle format {fmt!r}")


def _fmt_srt_time(ms: int) -> str:
    h, rem = divmod(ms, 3_600_000)
    m, rem = divmod(rem, 60_000)
    s, ms = divmod(rem, 1000)
    return f"{h:02d}:{m:02d}:{s:02d},{ms:03d}"


def format_srt(cues: Sequence[SubtitleCue]) -> str:
    out = []
    for n, cue in enumerate(cues, 1):
        out.append(f"{n}\n{_fmt_srt_time(cue.start_ms)} --> {_fmt_srt_time(cue.end_ms)}\n{cue.text}\n")
    return "\n".join(out)


def align_cues_to_frames(
    cues: Sequence[SubtitleCue], frame_timestamps_ms: Sequence[int]
) -> list[str]:
    """Give each frame the text of every cue active at its timestamp.

    A cue is active on the half-open interval ``[start_ms, end_ms)``;
    overlapping cues are joined with single spaces in cue order.
    """
    out = []
    for t in frame_timestamps_ms:
        out.append(" ".join(c.text for c in cues if c.start_ms <= t < c.end_ms))
    return out


def _fit_prefix(text: str, remaining: int, token_counter: Callable[[str], int]) -> str:
    lo, hi = 0, len(text)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if token_counter(text[:mid]) <= remaining:
            lo = mid
        else:
            hi = mid - 1
    # a partially typed special marker can count more than the full marker,
    # so look a little past the bisection point for a longer fit
    for cut in range(min(len(text), lo + _LOOKAHEAD), lo, -1):
        if token_counter(text[:cut]) <= remaining:
            return text[:cut]
    return text[:lo]


def enforce_subtitle_budget(
    frame_subs: Sequence[str],
    token_counter: Callable[[str], int],
    budget: int,
) -> list[str]:
    """Keep subtitles front to back until ``budget`` tokens are spent.

    The first frame that would overflow keeps its longest fitting prefix
    (cut on a character boundary); every later frame is emptied.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    out: list[str] = []
    used = 0
    exhausted = False
    for text in frame_subs:
        if exhausted:
            out.append("")
            continue
        n = token_counter(text)
        if used + n <= budget:
            out.append(text)
            used += n
            continue
        prefix = _fit_prefix(text, budget - used, token_counter)
        out.append(prefix)
        used += token_counter(prefix)
        exhausted = True
    return out
