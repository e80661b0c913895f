"""Loss models on stacked network outputs.

With n = len(y_hat) = r * output_dim and d = y_hat - y:

    mse:            L = ||d||^2 / (2n)      (the 1/2 keeps the Hessian I/n)
    sse:            L = ||d||^2 / 2
    mae:            L = ||d||_1 / n
    cross_entropy:  L = -y . log(y_hat),    y_hat > 0 required

Gradients and Hessians are with respect to y_hat.  The mae subgradient at
a tie is taken as 0, matching the relu convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOSS_KINDS = ("mse", "sse", "mae", "cross_entropy")


@dataclass(frozen=True)
class LossModel:
    kind: str = "mse"

    def __post_init__(self) -> None:
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")

    def _check(self, y_hat: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y_hat = np.asarray(y_hat, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if y_hat.shape != y.shape or y_hat.ndim != 1:
            raise ValueError(f"y_hat and y must be flat vectors of equal length, got {y_hat.shape} and {y.shape}")
        if self.kind == "cross_entropy":
            if np.any(y_hat <= 0.0):
                raise ValueError("cross_entropy requires strictly positive predictions")
            if np.any(y < 0.0):
                raise ValueError("cross_entropy requires non-negative targets")
        return y_hat, y

    def value(self, y_hat: np.ndarray, y: np.ndarray) -> float:
        y_hat, y = self._check(y_hat, y)
        n = y_hat.shape[0]
        d = y_hat - y
        # overflow to inf is meaningful here: it trips divergence detection
        with np.errstate(over="ignore"):
            if self.kind == "mse":
                return float(d @ d) / (2.0 * n)
            if self.kind == "sse":
                return float(d @ d) / 2.0
            if self.kind == "mae":
                return float(np.abs(d).sum()) / n
            return float(-(y @ np.log(y_hat)))

    def gradient(self, y_hat: np.ndarray, y: np.ndarray) -> np.ndarray:
        y_hat, y = self._check(y_hat, y)
        n = y_hat.shape[0]
        d = y_hat - y
        if self.kind == "mse":
            return d / n
        if self.kind == "sse":
            return d.copy()
        if self.kind == "mae":
            return np.sign(d) / n
        return -y / y_hat

    def hessian(self, y_hat: np.ndarray, y: np.ndarray) -> np.ndarray:
        y_hat, y = self._check(y_hat, y)
        n = y_hat.shape[0]
        if self.kind == "mse":
            return np.eye(n) / n
        if self.kind == "sse":
            return np.eye(n)
        if self.kind == "mae":
            return np.zeros((n, n))
        return np.diag(y / y_hat**2)

    def hessian_scale(self, n: int) -> float | None:
        """h such that the Hessian is h * I, or None when state-dependent."""
        if self.kind == "mse":
            return 1.0 / n
        if self.kind == "sse":
            return 1.0
        if self.kind == "mae":
            return 0.0
        return None
