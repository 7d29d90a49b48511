"""Toy visual pipeline: patch embedding, 4-token condensation, linear projection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import MeanSquaredError, central_difference, max_relative_error

IMAGE_SIZE = 224
PATCH_SIZE = 14
GRID = IMAGE_SIZE // PATCH_SIZE  # 16
NUM_PATCHES = GRID * GRID  # 256
PATCH_DIM = PATCH_SIZE * PATCH_SIZE * 3  # 588
# consecutive raster-order tokens 4j..4j+3 merge into one
CONDENSE_GROUP = 4
CONDENSED_TOKENS = NUM_PATCHES // CONDENSE_GROUP  # 64

D_VIS = 16
D_LLM = 32

RAW, CONDENSED, PROJECTED = "raw", "condensed", "projected"


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class Frame:
    pixels: np.ndarray
    timestamp_ms: int = 0

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.shape != (IMAGE_SIZE, IMAGE_SIZE, 3):
            raise ShapeError(f"frame must be {IMAGE_SIZE}x{IMAGE_SIZE}x3, got {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ShapeError("frame has non-finite pixels")
        object.__setattr__(self, "pixels", px)


@dataclass(frozen=True)
class VisualTokens:
    tokens: np.ndarray
    stage: str

    def __post_init__(self) -> None:
        t = np.asarray(self.tokens, dtype=np.float64)
        if t.ndim != 2:
            raise ShapeError(f"tokens must be 2-D, got shape {t.shape}")
        if self.stage not in (RAW, CONDENSED, PROJECTED):
            raise ValueError(f"unknown stage {self.stage!r}")
        if not np.all(np.isfinite(t)):
            raise ShapeError("tokens contain non-finite values")
        object.__setattr__(self, "tokens", t)

    @property
    def count(self) -> int:
        return self.tokens.shape[0]

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]


@dataclass
class Projector:
    W: np.ndarray
    b: np.ndarray
    seed: int | None = None

    def __post_init__(self) -> None:
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[1],):
            raise ShapeError(f"inconsistent projector shapes W{self.W.shape} b{self.b.shape}")

    @classmethod
    def init(cls, d_vis: int = D_VIS, d_llm: int = D_LLM, seed: int = 0) -> "Projector":
        rng = np.random.default_rng(seed)
        d_in = CONDENSE_GROUP * d_vis
        W = rng.normal(0.0, 1.0 / math.sqrt(d_in), size=(d_in, d_llm))
        return cls(W, np.zeros(d_llm), seed)

    @property
    def d_in(self) -> int:
        return self.W.shape[0]

    @property
    def d_out(self) -> int:
        return self.W.shape[1]

    def copy(self) -> "Projector":
        return Projector(self.W.copy(), self.b.copy(), self.seed)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    # multiplies learning_rate; toy problems with few steps need > 1
    lr_scale: float = 1.0
    batch_size: int = 4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    def __post_init__(self) -> None:
        if self.learning_rate < 0 or self.lr_scale < 0:
            raise ValueError("learning_rate and lr_scale must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def patch_embedding_matrix(seed: int, d_vis: int = D_VIS) -> np.ndarray:
    """Frozen random map from a flattened 14x14x3 patch to ``d_vis`` dims."""
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, 1.0 / math.sqrt(PATCH_DIM), size=(PATCH_DIM, d_vis))


def patchify(pixels: np.ndarray) -> np.ndarray:
    """(224, 224, 3) -> (256, 588), patches in raster order, each row-major."""
    p = pixels.reshape(GRID, PATCH_SIZE, GRID, PATCH_SIZE, 3)
    return p.transpose(0, 2, 1, 3, 4).reshape(NUM_PATCHES, PATCH_DIM)


def encode_frame(frame: Frame, encoder_seed: int = 0, d_vis: int = D_VIS) -> VisualTokens:
    if not isinstance(frame, Frame):
        frame = Frame(frame)
    return VisualTokens(patchify(frame.pixels) @ patch_embedding_matrix(encoder_seed, d_vis), RAW)


def condense(raw: VisualTokens) -> VisualTokens:
    t = raw.tokens
    n, d = t.shape
    if n % CONDENSE_GROUP:
        raise ShapeError(f"token count {n} is not divisible by {CONDENSE_GROUP}")
    return VisualTokens(t.reshape(n // CONDENSE_GROUP, CONDENSE_GROUP * d), CONDENSED)


def project(condensed: VisualTokens, p: Projector) -> VisualTokens:
    if condensed.dim != p.d_in:
        raise ShapeError(f"condensed dim {condensed.dim} does not match projector input {p.d_in}")
    return VisualTokens(condensed.tokens @ p.W + p.b, PROJECTED)


def frame_to_llm_tokens(
    frame: Frame, p: Projector, encoder_seed: int = 0
) -> VisualTokens:
    d_vis = p.d_in // CONDENSE_GROUP
    return project(condense(encode_frame(frame, encoder_seed, d_vis)), p)


def projector_gradients(p: Projector, x: np.ndarray, loss) -> tuple[float, dict[str, np.ndarray]]:
    y = x @ p.W + p.b
    g = loss.grad(y)
    return loss.value(y), {"W": x.T @ g, "b": g.sum(axis=0)}


def gradient_check_projector(
    p: Projector, inputs: np.ndarray | VisualTokens, loss, epsilon: float = 1e-6
) -> float:
    """Largest relative gap between analytic and central-difference gradients."""
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-7, 1e-3]")
    x = inputs.tokens if isinstance(inputs, VisualTokens) else np.asarray(inputs, dtype=np.float64)
    work = p.copy()
    _, analytic = projector_gradients(work, x, loss)
    numeric = central_difference(
        lambda: loss.value(x @ work.W + work.b), {"W": work.W, "b": work.b}, epsilon
    )
    return max_relative_error(analytic, numeric)


def cosine_lr(base_lr: float, step: int, total_steps: int) -> float:
    """Cosine decay from ``base_lr`` at step 0 towards 0 at ``total_steps``."""
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * step / total_steps))


def train_projection(
    p: Projector,
    pairs: list[tuple[np.ndarray, np.ndarray]],
    cfg: TrainConfig = TrainConfig(),
    steps: int = 200,
) -> tuple[Projector, list[float]]:
    """Fit the projector with AdamW on mean squared error.

    Batches of ``cfg.batch_size`` pairs are drawn cyclically in the given
    order. The returned trace holds the batch loss before each update.
    """
    if not pairs:
        raise ValueError("need at least one training pair")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    p = p.copy()
    xs = np.stack([np.asarray(x, dtype=np.float64) for x, _ in pairs])
    ts = np.stack([np.asarray(t, dtype=np.float64) for _, t in pairs])
    params = {"W": p.W, "b": p.b}
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(v) for k, v in params.items()}
    trace: list[float] = []
    n = len(pairs)
    for step in range(steps):
        idx = [(step * cfg.batch_size + j) % n for j in range(cfg.batch_size)]
        x = xs[idx].reshape(-1, p.d_in)
        loss = MeanSquaredError(ts[idx].reshape(-1, p.d_out))
        value, grads = projector_gradients(p, x, loss)
        trace.append(value)
        lr = cosine_lr(cfg.learning_rate * cfg.lr_scale, step, steps)
        t = step + 1
        for k, param in params.items():
            g = grads[k]
            m[k] = cfg.beta1 * m[k] + (1 - cfg.beta1) * g
            v[k] = cfg.beta2 * v[k] + (1 - cfg.beta2) * g * g
            m_hat = m[k] / (1 - cfg.beta1 ** t)
            v_hat = v[k] / (1 - cfg.beta2 ** t)
            param -= lr * cfg.weight_decay * param
            param -= lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return p, trace


def synthetic_pairs(
    n: int, d_vis: int = D_VIS, d_llm: int = D_LLM, seed: int = 0
) -> tuple[list[tuple[np.ndarray, np.ndarray]], Projector]:
    """Random condensed tokens mapped through a hidden linear projector."""
    rng = np.random.default_rng(seed)
    hidden = Projector(
        rng.normal(0.0, 1.0 / math.sqrt(CONDENSE_GROUP * d_vis), size=(CONDENSE_GROUP * d_vis, d_llm)),
        rng.normal(0.0, 0.1, size=d_llm),
    )
    pairs = []
    for _ in range(n):
        x = rng.normal(size=(CONDENSED_TOKENS, CONDENSE_GROUP * d_vis))
        pairs.append((x, x @ hidden.W + hidden.b))
    return pairs, hidden


# -- frame files ------------------------------------------------------------

FRAME_SUFFIXES = (".frame", ".rgb", ".npy")


def write_frame_file(path: str | Path, pixels: np.ndarray) -> None:
    """Flat binary: int32 LE width, height, channels, then float32 row-major pixels."""
    px = np.asarray(pixels, dtype="<f4")
    h, w, c = px.shape
    with open(path, "wb") as fh:
        fh.write(np.array([w, h, c], dtype="<i4").tobytes())
        fh.write(px.tobytes(order="C"))


def read_frame_file(path: str | Path, timestamp_ms: int = 0) -> Frame:
    path = Path(path)
    data = path.read_bytes()
    if path.suffix == ".npy":
        return Frame(np.load(path), timestamp_ms)
    if path.suffix == ".rgb":
        expected = IMAGE_SIZE * IMAGE_SIZE * 3
        if len(data) != expected:
            raise ShapeError(f"{path}: raw RGB frame must be {expected} bytes, got {len(data)}")
        px = np.frombuffer(data, dtype=np.uint8).reshape(IMAGE_SIZE, IMAGE_SIZE, 3) / 255.0
        return Frame(px, timestamp_ms)
    if len(data) < 12:
        raise ShapeError(f"{path}: truncated frame header")
    w, h, c = (int(x) for x in np.frombuffer(data[:12], dtype="<i4"))
    body = np.frombuffer(data[12:], dtype="<f4")
    if body.size != w * h * c:
        raise ShapeError(f"{path}: header says {w}x{h}x{c} but body holds {body.size} values")
    return Frame(body.reshape(h, w, c).astype(np.float64), timestamp_ms)
