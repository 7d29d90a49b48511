"""LoRA adapters on the query and value projections of a toy attention layer."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import central_difference, max_relative_error

PAPER_RANK = 64
PAPER_ALPHA = 16.0
INIT_STD = 0.02


class ShapeMismatchError(ValueError):
    pass


@dataclass
class LoraAdapter:
    A: np.ndarray  # (r, d_in)
    B: np.ndarray  # (d_out, r)
    alpha: float = PAPER_ALPHA

    def __post_init__(self) -> None:
        self.A = np.asarray(self.A, dtype=np.float64)
        self.B = np.asarray(self.B, dtype=np.float64)
        if self.A.ndim != 2 or self.B.ndim != 2 or self.A.shape[0] != self.B.shape[1]:
            raise ShapeMismatchError(f"A{self.A.shape} and B{self.B.shape} disagree on rank")
        if self.r < 1:
            raise ValueError("rank must be >= 1")

    @classmethod
    def init(
        cls, d_in: int, d_out: int, r: int = PAPER_RANK, alpha: float = PAPER_ALPHA, seed: int = 0
    ) -> "LoraAdapter":
        """Gaussian A (std 0.02), zero B: a no-op until B is trained."""
        if r < 1:
            raise ValueError("rank must be >= 1")
        rng = np.random.default_rng(seed)
        return cls(rng.normal(0.0, INIT_STD, size=(r, d_in)), np.zeros((d_out, r)), alpha)

    @property
    def r(self) -> int:
        return self.A.shape[0]

    @property
    def d_in(self) -> int:
        return self.A.shape[1]

    @property
    def d_out(self) -> int:
        return self.B.shape[0]

    @property
    def scaling(self) -> float:
        return self.alpha / self.r

    @property
    def num_parameters(self) -> int:
        return self.A.size + self.B.size

    def delta(self) -> np.ndarray:
        return self.scaling * (self.B @ self.A)


def _check(adapter: LoraAdapter, W_base: np.ndarray, x: np.ndarray | None = None) -> None:
    if W_base.shape != (adapter.d_out, adapter.d_in):
        raise ShapeMismatchError(
            f"base weight {W_base.shape} does not match adapter ({adapter.d_out}, {adapter.d_in})"
        )
    if x is not None and (x.ndim != 2 or x.shape[1] != adapter.d_in):
        raise ShapeMismatchError(f"input shape {x.shape} needs {adapter.d_in} columns")


def lora_forward(adapter: LoraAdapter, W_base: np.ndarray, x: np.ndarray) -> np.ndarray:
    """x W^T + scaling * x A^T B^T, without materialising the merged weight."""
    W_base = np.asarray(W_base, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check(adapter, W_base, x)
    return x @ W_base.T + adapter.scaling * ((x @ adapter.A.T) @ adapter.B.T)


def merge_lora(adapter: LoraAdapter, W_base: np.ndarray) -> np.ndarray:
    W_base = np.asarray(W_base, dtype=np.float64)
    _check(adapter, W_base)
    return W_base + adapter.delta()


@dataclass
class ToyAttention:
    """Single-head attention; only ``adapter_q`` and ``adapter_v`` train."""

    W_q: np.ndarray
    W_k: np.ndarray
    W_v: np.ndarray
    W_o: np.ndarray
    adapter_q: LoraAdapter
    adapter_v: LoraAdapter

    def __post_init__(self) -> None:
        for name in ("W_q", "W_k", "W_v", "W_o"):
            w = np.array(getattr(self, name), dtype=np.float64)
            if w.shape != (self.d_model, self.d_model):
                raise ShapeMismatchError(f"{name} must be square {self.d_model}x{self.d_model}")
            w.flags.writeable = False
            setattr(self, name, w)
        _check(self.adapter_q, self.W_q)
        _check(self.adapter_v, self.W_v)

    @property
    def d_model(self) -> int:
        return np.shape(self.W_q)[0]

    @classmethod
    def init(
        cls, d_model: int, r: int = PAPER_RANK, alpha: float = PAPER_ALPHA, seed: int = 0
    ) -> "ToyAttention":
        rng = np.random.default_rng(seed)
        std = 1.0 / math.sqrt(d_model)
        base = [rng.normal(0.0, std, size=(d_model, d_model)) for _ in range(4)]
        aq_seed, av_seed = rng.integers(0, 2**31, size=2)
        return cls(
            *base,
            adapter_q=LoraAdapter.init(d_model, d_model, r, alpha, int(aq_seed)),
            adapter_v=LoraAdapter.init(d_model, d_model, r, alpha, int(av_seed)),
        )

    def trainable_parameters(self) -> dict[str, np.ndarray]:
        return {
            "q.A": self.adapter_q.A, "q.B": self.adapter_q.B,
            "v.A": self.adapter_v.A, "v.B": self.adapter_v.B,
        }

    def frozen_parameters(self) -> dict[str, np.ndarray]:
        return {"W_q": self.W_q, "W_k": self.W_k, "W_v": self.W_v, "W_o": self.W_o}

    def num_trainable(self) -> int:
        return sum(p.size for p in self.trainable_parameters().values())


def softmax(s: np.ndarray) -> np.ndarray:
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _forward_cache(att: ToyAttention, x: np.ndarray) -> dict:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != att.d_model:
        raise ShapeMismatchError(f"input shape {x.shape} needs {att.d_model} columns")
    q = lora_forward(att.adapter_q, att.W_q, x)
    k = x @ att.W_k.T
    v = lora_forward(att.adapter_v, att.W_v, x)
    P = softmax(q @ k.T / math.sqrt(att.d_model))
    h = P @ v
    return {"x": x, "q": q, "k": k, "v": v, "P": P, "h": h, "out": h @ att.W_o.T}


def attention_forward(att: ToyAttention, x: np.ndarray, return_weights: bool = False):
    c = _forward_cache(att, x)
    return (c["out"], c["P"]) if return_weights else c["out"]


def attention_adapter_gradients(att: ToyAttention, x: np.ndarray, loss) -> tuple[float, dict]:
    """Backpropagate ``loss`` to the four adapter matrices."""
    c = _forward_cache(att, x)
    x, k, v, P = c["x"], c["k"], c["v"], c["P"]
    G = loss.grad(c["out"])
    dh = G @ att.W_o
    dP = dh @ v.T
    dv = P.T @ dh
    dS = P * (dP - np.sum(dP * P, axis=1, keepdims=True))
    dq = dS @ k / math.sqrt(att.d_model)

    grads = {}
    for tag, ad, dy in (("q", att.adapter_q, dq), ("v", att.adapter_v, dv)):
        u = x @ ad.A.T
        grads[f"{tag}.B"] = ad.scaling * dy.T @ u
        grads[f"{tag}.A"] = (ad.scaling * dy @ ad.B).T @ x
    return loss.value(c["out"]), grads


@dataclass(frozen=True)
class LoraGradReport:
    max_adapter_grad_error: float
    base_grads_all_zero: bool
    trainable: tuple[str, ...]


def gradient_check_lora(
    att: ToyAttention, x: np.ndarray, loss, epsilon: float = 1e-6
) -> LoraGradReport:
    """Compare adapter gradients with central differences.

    Base matrices are read-only and absent from the trainable set, so no
    optimizer can ever receive a gradient for them.
    """
    _, analytic = attention_adapter_gradients(att, x, loss)
    params = att.trainable_parameters()
    numeric = central_difference(lambda: loss.value(attention_forward(att, x)), params, epsilon)
    frozen_ids = {id(w) for w in att.frozen_parameters().values()}
    base_excluded = not any(id(p) in frozen_ids for p in params.values()) and all(
        not w.flags.writeable for w in att.frozen_parameters().values()
    )
    return LoraGradReport(max_relative_error(analytic, numeric), base_excluded, tuple(params))
