"""Context-window budgeting and frame sub-sampling."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

TOKENS_PER_FRAME = 64


class BudgetError(ValueError):
    pass


class InfeasibleBudgetError(BudgetError):
    """Raised when not a single frame fits the requested window."""


class UnknownPresetError(BudgetError):
    pass


@dataclass(frozen=True)
class BudgetPlan:
    context_window: int
    tokens_per_frame: int
    max_frames: int
    subtitle_budget: int
    output_reserve: int

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if not isinstance(value, int) or isinstance(value, bool):
                raise BudgetError(f"{name} must be an integer, got {value!r}")
            if value < 1:
                raise BudgetError(f"{name} must be >= 1, got {value}")
        if self.used_tokens > self.context_window:
            raise InfeasibleBudgetError(
                f"plan needs {self.used_tokens} tokens but the window holds "
                f"{self.context_window}"
            )

    @property
    def visual_tokens(self) -> int:
        return self.max_frames * self.tokens_per_frame

    @property
    def used_tokens(self) -> int:
        return self.visual_tokens + self.subtitle_budget + self.output_reserve

    @property
    def input_capacity(self) -> int:
        """Token positions available to the assembled input sequence."""
        return self.context_window - self.output_reserve

    def to_dict(self) -> dict[str, int]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "BudgetPlan":
        return cls(**{k: data[k] for k in (
            "context_window", "tokens_per_frame", "max_frames",
            "subtitle_budget", "output_reserve",
        )})


@dataclass(frozen=True)
class FrameSamplePlan:
    total_frames: int
    indices: tuple[int, ...]
    timestamps_ms: tuple[int, ...] | None = field(default=None)

    def __post_init__(self) -> None:
        prev = -1
        for i in self.indices:
            if i <= prev or i >= self.total_frames:
                raise ValueError(f"invalid frame index sequence {self.indices}")
            prev = i
        if self.timestamps_ms is not None and len(self.timestamps_ms) != len(self.indices):
            raise ValueError("timestamps_ms must have one entry per index")

    def to_dict(self) -> dict:
        return {
            "total_frames": self.total_frames,
            "indices": list(self.indices),
            "timestamps_ms": None if self.timestamps_ms is None else list(self.timestamps_ms),
        }


def plan_budget(
    context_window: int,
    tokens_per_frame: int = TOKENS_PER_FRAME,
    subtitle_budget: int = 1000,
    output_reserve: int = 216,
) -> BudgetPlan:
    """Fit as many frames as possible after the subtitle and output reservations.

    >>> plan_budget(4096, 64, 1000, 216).max_frames
    45
    """
    args = {
        "context_window": context_window,
        "tokens_per_frame": tokens_per_frame,
        "subtitle_budget": subtitle_budget,
        "output_reserve": output_reserve,
    }
    for name, value in args.items():
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise BudgetError(f"{name} must be a positive integer, got {value!r}")
    free = context_window - subtitle_budget - output_reserve
    if free < tokens_per_frame:
        raise InfeasibleBudgetError(
            f"no frame fits: {context_window} - {subtitle_budget} - {output_reserve} "
            f"leaves {free} tokens, one frame needs {tokens_per_frame}"
        )
    return BudgetPlan(
        context_window=context_window,
        tokens_per_frame=tokens_per_frame,
        max_frames=free // tokens_per_frame,
        subtitle_budget=subtitle_budget,
        output_reserve=output_reserve,
    )


# Mistral doubles N explicitly instead of re-deriving it from the window.
PRESETS: dict[str, BudgetPlan] = {
    "llama2": BudgetPlan(4096, TOKENS_PER_FRAME, 45, 1000, 216),
    "mistral": BudgetPlan(8192, TOKENS_PER_FRAME, 90, 1000, 1432),
}


def preset_plan(name: str) -> BudgetPlan:
    try:
        return PRESETS[name]
    except KeyError:
        raise UnknownPresetError(
            f"unknown preset {name!r}; choose from {sorted(PRESETS)}"
        ) from None


def sample_frame_indices(
    total_frames: int, max_frames: int, interval_ms: float | None = None
) -> FrameSamplePlan:
    """Pick at most ``max_frames`` indices, one at the midpoint of each equal bucket.

    ``interval_ms`` is the spacing of the source frames; when given, each
    selected index gets the timestamp ``index * interval_ms``.
    """
    if total_frames < 1 or max_frames < 1:
        raise ValueError("total_frames and max_frames must be >= 1")
    if total_frames <= max_frames:
        indices = tuple(range(total_frames))
    else:
        k = max_frames
        # integer form of floor((i + 0.5) * total / k)
        indices = tuple(((2 * i + 1) * total_frames) // (2 * k) for i in range(k))
    timestamps = None
    if interval_ms is not None:
        timestamps = tuple(int(math.floor(i * interval_ms)) for i in indices)
    return FrameSamplePlan(total_frames, indices, timestamps)
