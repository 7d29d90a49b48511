"""Interleaved frame/subtitle/instruction sequence assembly.

Grammar of an assembled sequence::

    <s>[INST]  ( <Img> FRAME [<Sub> subtitle] )*  instruction  [/INST]

``FRAME`` is a span of 64 projected embeddings. The ``<Sub>`` marker is
omitted for frames without subtitle text. Subtitle and instruction text are
encoded as plain bytes, so literal marker strings inside them cannot forge
control tokens.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import toktext
from .budget import BudgetPlan
from .vision import CONDENSED_TOKENS, PROJECTED, VisualTokens

TEXT, VISUAL = "text", "visual"

DEFAULT_INSTRUCTIONS = (
    "Briefly describe these video",
    "Describe this video in detail.",
    "Summarize what happens in the video.",
    "What is happening in this video?",
    "Give a short caption for this video.",
)

STAGES = ("pretrain_caption", "vqa_finetune")


class AssemblyError(ValueError):
    pass


class BudgetExceededError(AssemblyError):
    def __init__(self, message: str, frame_index: int | None = None):
        self.frame_index = frame_index
        super().__init__(message)


class FrameCountMismatchError(AssemblyError):
    pass


@dataclass(frozen=True)
class Segment:
    kind: str
    ids: tuple[int, ...] = ()
    embeddings: np.ndarray | None = None
    frame_index: int | None = None

    def __post_init__(self) -> None:
        if self.kind == VISUAL:
            if self.embeddings is None or self.embeddings.shape[0] != CONDENSED_TOKENS:
                raise AssemblyError(f"visual segments need exactly {CONDENSED_TOKENS} rows")
        elif self.kind != TEXT:
            raise AssemblyError(f"unknown segment kind {self.kind!r}")

    @property
    def length(self) -> int:
        return len(self.ids) if self.kind == TEXT else self.embeddings.shape[0]


@dataclass(frozen=True)
class InterleavedSequence:
    segments: tuple[Segment, ...]
    total_token_positions: int
    budget: BudgetPlan

    @property
    def visual_positions(self) -> int:
        return sum(s.length for s in self.segments if s.kind == VISUAL)

    def token_ids(self) -> list[int | None]:
        """Flat position list; visual positions appear as ``None``."""
        out: list[int | None] = []
        for s in self.segments:
            out.extend(s.ids if s.kind == TEXT else [None] * s.length)
        return out


@dataclass(frozen=True)
class InstructionSet:
    instructions: tuple[str, ...] = DEFAULT_INSTRUCTIONS
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not self.instructions:
            raise AssemblyError("instruction set is empty")


def sample_instruction(iset: InstructionSet, draw_index: int = 0) -> str:
    """Uniform draw keyed by ``(rng_seed, draw_index)``; order of calls is irrelevant."""
    if not iset.instructions:
        raise AssemblyError("instruction set is empty")
    rng = np.random.default_rng([iset.rng_seed, draw_index])
    return iset.instructions[int(rng.integers(len(iset.instructions)))]


def _text(ids: Sequence[int], frame_index: int | None = None) -> Segment:
    return Segment(TEXT, tuple(ids), frame_index=frame_index)


def assemble(
    frames: Sequence[VisualTokens],
    frame_subs: Sequence[str],
    instruction: str,
    plan: BudgetPlan,
) -> InterleavedSequence:
    if len(frames) != len(frame_subs):
        raise FrameCountMismatchError(
            f"{len(frames)} frames but {len(frame_subs)} subtitle slots"
        )
    if len(frames) > plan.max_frames:
        raise BudgetExceededError(
            f"frame {plan.max_frames} exceeds the plan's {plan.max_frames}-frame limit",
            plan.max_frames,
        )
    capacity = plan.input_capacity
    segments: list[Segment] = [_text([toktext.BOS, toktext.INST])]
    used = 2

    def take(seg: Segment, frame_index: int | None) -> None:
        nonlocal used
        used += seg.length
        if used > capacity:
            where = "the instruction" if frame_index is None else f"frame {frame_index}"
            raise BudgetExceededError(
                f"{where} overflows the input capacity ({used} > {capacity})", frame_index
            )
        segments.append(seg)

    for i, (vt, sub) in enumerate(zip(frames, frame_subs)):
        if vt.stage != PROJECTED:
            raise AssemblyError(f"frame {i} is at stage {vt.stage!r}, expected projected")
        take(_text([toktext.IMG], i), i)
        take(Segment(VISUAL, embeddings=vt.tokens, frame_index=i), i)
        if sub:
            take(_text([toktext.SUB, *toktext.tokenize(sub, allow_specials=False)], i), i)
    if instruction:
        take(_text(toktext.tokenize(instruction, allow_specials=False)), None)
    take(_text([toktext.INST_END]), None)
    return InterleavedSequence(tuple(segments), used, plan)


def render_stage_template(stage: str, n_frames: int, slot_text: str | None = None) -> str:
    """Placeholder skeleton of a training prompt.

    Both stages share one grammar; the VQA stage puts a question where the
    captioning stage has its instruction.
    """
    if stage not in STAGES:
        raise AssemblyError(f"unknown stage {stage!r}; choose from {STAGES}")
    if slot_text is None:
        slot_text = "<Instruction>" if stage == "pretrain_caption" else "<Question>"
    body = "".join(
        f"<Img><FrameFeature_{i}><Sub><Subtitle text_{i}>" for i in range(1, n_frames + 1)
    )
    return f"<s>[INST]{body}{slot_text}[/INST]"


def embedding_checksum(embeddings: np.ndarray) -> str:
    data = np.ascontiguousarray(embeddings, dtype="<f8").tobytes()
    return "sha256:" + hashlib.sha256(data).hexdigest()


def sequence_manifest(seq: InterleavedSequence) -> dict:
    segments = []
    for s in seq.segments:
        entry: dict = {"kind": s.kind, "length": s.length, "frame_index": s.frame_index}
        if s.kind == TEXT:
            entry["ids"] = list(s.ids)
            entry["text"] = toktext.detokenize(s.ids)
        else:
            entry["shape"] = list(s.embeddings.shape)
            entry["checksum"] = embedding_checksum(s.embeddings)
        segments.append(entry)
    return {
        "segments": segments,
        "total_token_positions": seq.total_token_positions,
        "visual_positions": seq.visual_positions,
        "budget": seq.budget.to_dict(),
    }


def write_embeddings(seq: InterleavedSequence, path) -> None:
    """Sidecar of all visual spans in sequence order, float32 little-endian, row-major."""
    arrays = [s.embeddings for s in seq.segments if s.kind == VISUAL]
    with open(path, "wb") as fh:
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
