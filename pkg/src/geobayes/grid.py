from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform vertex grid on the unit square.

    Nodal arrays have shape ``(n, n)`` and are indexed ``[i, j]`` with
    ``x = x[i]``, ``y = y[j]``.
    """

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"grid needs n >= 3 nodes per axis, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n - 1)

    @cached_property
    def coords(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.coords, self.coords, indexing="ij")

    @cached_property
    def boundary(self) -> np.ndarray:
        b = np.zeros((self.n, self.n), dtype=bool)
        b[0, :] = b[-1, :] = b[:, 0] = b[:, -1] = True
        return b

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights; they sum to 1."""
        w1 = np.full(self.n, self.h)
        w1[0] = w1[-1] = 0.5 * self.h
        return np.outer(w1, w1)

    def l2_norm(self, values) -> float:
        return float(np.sqrt(np.sum(self.weights * np.asarray(values) ** 2)))

    def l2_distance(self, a, b) -> float:
        return self.l2_norm(np.asarray(a) - np.asarray(b))
