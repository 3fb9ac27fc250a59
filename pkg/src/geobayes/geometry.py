"""Geometric interface models and their region masks on a vertex grid.

Each model maps a parameter vector ``a`` to a partition ``A_1(a), ..., A_N(a)``
of the unit square.  Layered models (``layer2``, ``curve2``, ``multilayer``,
``fault3``) are described by ordered interface curves ``y = f_i(x)``; a node
belongs to region ``1 + #{i : y > f_i(x)}`` so a node lying exactly on an
interface goes to the lower region.

``fault3``: two straight interfaces from ``(0, a1)``, ``(0, a2)`` to
``(0.55, a3)``, ``(0.55, a4)``; right of the fault line ``x = 0.55`` both keep
their slopes and are shifted vertically by the throw ``a5``.

``channel``: centreline ``R(a3) (t, a1 sin(a2 t)) + (0, a4)`` for
``t in [0, 2]``; region 1 is the set of points within distance ``a5 / 2`` of
the centreline measured along the rotated vertical axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid

FAULT_X = 0.55
CHANNEL_T_MAX = 2.0

TAGS = ("layer2", "curve2", "multilayer", "fault3", "channel")


@dataclass(frozen=True)
class GeometryModel:
    tag: str
    K: int = 0
    N: int = 0

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown geometry model {self.tag!r}")
        if self.tag == "multilayer" and (self.K < 2 or self.N < 2):
            raise ValueError("multilayer needs K >= 2 and N >= 2")

    @property
    def k(self) -> int:
        return {
            "layer2": 2,
            "curve2": 2,
            "fault3": 5,
            "channel": 5,
            "multilayer": (self.N - 1) * self.K,
        }[self.tag]

    @property
    def n_regions(self) -> int:
        return {"layer2": 2, "curve2": 2, "fault3": 3, "channel": 2, "multilayer": self.N}[self.tag]

    def check(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float).ravel()
        if a.shape != (self.k,):
            raise ValueError(f"{self.tag} expects {self.k} geometry parameters, got {a.size}")
        return a

    def interfaces(self, a, x) -> list[np.ndarray]:
        """Interface heights at abscissae ``x``, lowest first (layered models)."""
        a = self.check(a)
        x = np.asarray(x, dtype=float)
        if self.tag == "layer2":
            return [a[0] + (a[1] - a[0]) * x]
        if self.tag == "curve2":
            return [curve_height(a[0], a[1], x)]
        if self.tag == "fault3":
            shift = np.where(x > FAULT_X, a[4], 0.0)
            return [
                a[0] + (a[2] - a[0]) * x / FAULT_X + shift,
                a[1] + (a[3] - a[1]) * x / FAULT_X + shift,
            ]
        if self.tag == "multilayer":
            knots = np.linspace(0.0, 1.0, self.K)
            heights = a.reshape(self.N - 1, self.K)
            return [np.interp(x, knots, row) for row in heights]
        raise ValueError(f"{self.tag} is not a layered model")


def layer2() -> GeometryModel:
    return GeometryModel("layer2")


def curve2() -> GeometryModel:
    return GeometryModel("curve2")


def fault3() -> GeometryModel:
    return GeometryModel("fault3")


def channel() -> GeometryModel:
    return GeometryModel("channel")


def multilayer(K: int, N: int) -> GeometryModel:
    return GeometryModel("multilayer", K=K, N=N)


def model_from_tag(tag: str, K: int = 0, N: int = 0) -> GeometryModel:
    if tag == "multilayer":
        return multilayer(K, N)
    return GeometryModel(tag)


def curve_height(a0, a1, x):
    return np.clip(a0 + (a1 - a0) * x + x * np.sin(6 * np.pi * x) / 10, 0.0, 1.0)


@dataclass(frozen=True)
class RegionMasks:
    index: np.ndarray  # (n, n) ints in 1..n_regions
    grid: Grid
    n_regions: int

    @property
    def areas(self) -> np.ndarray:
        w = self.grid.weights
        return np.array([w[self.index == i + 1].sum() for i in range(self.n_regions)])

    def indicator(self, region: int) -> np.ndarray:
        """Boolean mask of 1-based ``region``."""
        return self.index == region


def region_masks(model: GeometryModel, a, grid: Grid) -> RegionMasks:
    a = model.check(a)
    X, Y = grid.mesh
    if model.tag == "channel":
        index = np.where(channel_membership(a, X, Y), 1, 2)
    else:
        index = np.ones(X.shape, dtype=np.int64)
        for height in model.interfaces(a, X):
            index += Y > height
    return RegionMasks(np.asarray(index, dtype=np.int64), grid, model.n_regions)


def channel_membership(a, X, Y) -> np.ndarray:
    amp, freq, angle, offset, width = a
    c, s = np.cos(angle), np.sin(angle)
    dx, dy = X, Y - offset
    # rotate by -angle into the channel frame
    t = c * dx + s * dy
    v = -s * dx + c * dy
    inside = np.abs(v - amp * np.sin(freq * t)) <= 0.5 * width
    return inside & (t >= 0.0) & (t <= CHANNEL_T_MAX)


def symmetric_difference_area(m1: RegionMasks, m2: RegionMasks) -> np.ndarray:
    """Per-region quadrature area of ``A_i(a) symmetric-difference A_i(b)``."""
    if m1.grid != m2.grid:
        raise ValueError("masks live on different grids")
    if m1.n_regions != m2.n_regions:
        raise ValueError("masks have different region counts")
    w = m1.grid.weights
    return np.array(
        [w[(m1.index == i) != (m2.index == i)].sum() for i in range(1, m1.n_regions + 1)]
    )
