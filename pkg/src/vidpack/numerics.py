"""Losses and central finite differences shared by the gradient checks."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np


class SquaredError:
    """``0.5 * sum((y - target)**2)``."""

    def __init__(self, target: np.ndarray):
        self.target = np.asarray(target, dtype=np.float64)

    def value(self, y: np.ndarray) -> float:
        d = y - self.target
        return 0.5 * float(np.sum(d * d))

    def grad(self, y: np.ndarray) -> np.ndarray:
        return y - self.target


class MeanSquaredError:
    def __init__(self, target: np.ndarray):
        self.target = np.asarray(target, dtype=np.float64)

    def value(self, y: np.ndarray) -> float:
        return float(np.mean((y - self.target) ** 2))

    def grad(self, y: np.ndarray) -> np.ndarray:
        return 2.0 * (y - self.target) / y.size


class SumLoss:
    def value(self, y: np.ndarray) -> float:
        return float(np.sum(y))

    def grad(self, y: np.ndarray) -> np.ndarray:
        return np.ones_like(y)


class ZeroLoss:
    def value(self, y: np.ndarray) -> float:
        return 0.0

    def grad(self, y: np.ndarray) -> np.ndarray:
        return np.zeros_like(y)


def central_difference(
    f: Callable[[], float], params: Mapping[str, np.ndarray], epsilon: float
) -> dict[str, np.ndarray]:
    """Numerically differentiate ``f`` w.r.t. each array in ``params`` in place.

    Every entry is nudged by +/- ``epsilon`` and restored afterwards.
    """
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr, dtype=np.float64)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + epsilon
            plus = f()
            arr[idx] = orig - epsilon
            minus = f()
            arr[idx] = orig
            g[idx] = (plus - minus) / (2.0 * epsilon)
        grads[name] = g
    return grads


def max_relative_error(
    analytic: Mapping[str, np.ndarray], numeric: Mapping[str, np.ndarray]
) -> float:
    """max |a - n| / max(1, |n|) over every parameter entry."""
    worst = 0.0
    for name, n in numeric.items():
        a = analytic[name]
        err = np.abs(a - n) / np.maximum(1.0, np.abs(n))
        if err.size:
            worst = max(worst, float(err.max()))
    return worst
