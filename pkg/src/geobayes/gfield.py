"""Gaussian random fields ``N(m, s A^-alpha)`` with ``A`` the Neumann Laplacian.

Fields are stored as a constant mean plus coefficients on the L2-orthonormal
cosine basis ``phi_kl(x, y) = n_k n_l cos(k pi x) cos(l pi y)`` with
``n_0 = 1`` and ``n_k = sqrt(2)`` otherwise.  The ``(0, 0)`` slot is always
zero: fluctuations have zero spatial mean.  The eigenvalue of ``phi_kl`` is
``pi^2 (k^2 + l^2)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .grid import Grid
from .io_core import read_binary_grid, read_csv_matrix, write_binary_grid, write_csv_matrix

DIM = 2


@dataclass(frozen=True)
class FieldPrior:
    mean: float
    alpha: float
    scale: float = 1.0
    truncation: int = 63

    def __post_init__(self):
        if self.alpha <= DIM / 2:
            raise ValueError(f"alpha must exceed d/2 = 1, got {self.alpha}")
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if self.truncation < 1:
            raise ValueError(f"truncation must be >= 1, got {self.truncation}")

    def eigenvalues(self) -> np.ndarray:
        return eigenvalues(self.truncation)

    def std(self, alpha: float | None = None) -> np.ndarray:
        """Coefficient standard deviations; zero in the (0, 0) slot."""
        lam = self.eigenvalues()
        alpha = self.alpha if alpha is None else alpha
        sd = np.zeros_like(lam)
        nz = lam > 0
        sd[nz] = np.sqrt(self.scale) * lam[nz] ** (-alpha / 2)
        return sd

    def cm_weights(self) -> np.ndarray:
        """Diagonal of the Cameron-Martin inner product, ``lambda^alpha / s``."""
        lam = self.eigenvalues()
        return np.where(lam > 0, lam**self.alpha, 0.0) / self.scale

    def with_truncation(self, truncation: int) -> "FieldPrior":
        return FieldPrior(self.mean, self.alpha, self.scale, truncation)


@dataclass
class SpectralField:
    mean: float
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.coeffs = np.array(self.coeffs, dtype=float)
        if self.coeffs.ndim != 2 or self.coeffs.shape[0] != self.coeffs.shape[1]:
            raise ValueError("coefficients must form a square (M+1, M+1) array")
        self.coeffs[0, 0] = 0.0

    @property
    def truncation(self) -> int:
        return self.coeffs.shape[0] - 1

    def copy(self) -> "SpectralField":
        return SpectralField(self.mean, self.coeffs.copy())

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.mean + other.mean, self.coeffs + other.coeffs)


def zero_field(prior: FieldPrior) -> SpectralField:
    m = prior.truncation + 1
    return SpectralField(prior.mean, np.zeros((m, m)))


@lru_cache(maxsize=32)
def eigenvalues(truncation: int) -> np.ndarray:
    k = np.arange(truncation + 1)
    lam = np.pi**2 * (k[:, None] ** 2 + k[None, :] ** 2)
    lam.setflags(write=False)
    return lam


@lru_cache(maxsize=32)
def cosine_matrix(n: int, truncation: int) -> np.ndarray:
    """``C[i, k] = n_k cos(k pi x_i)`` on an ``n``-node axis."""
    x = np.linspace(0.0, 1.0, n)
    k = np.arange(truncation + 1)
    C = np.cos(np.pi * np.outer(x, k))
    C[:, 1:] *= np.sqrt(2.0)
    C.setflags(write=False)
    return C


def sample(prior: FieldPrior, rng: np.random.Generator, alpha: float | None = None) -> SpectralField:
    xi = rng.standard_normal((prior.truncation + 1,) * 2)
    return SpectralField(prior.mean, prior.std(alpha) * xi)


def smoothed_sample(prior: FieldPrior, rng: np.random.Generator) -> SpectralField:
    """Draw from ``N(m, s A^-(alpha + d/2))``; lies in the Cameron-Martin space."""
    return sample(prior, rng, alpha=prior.alpha + DIM / 2)


def synthesize(fld: SpectralField, grid: Grid) -> np.ndarray:
    M = fld.truncation
    if M > grid.n - 1:
        raise ValueError(f"truncation {M} aliases on a {grid.n}-node grid (max {grid.n - 1})")
    C = cosine_matrix(grid.n, M)
    return fld.mean + C @ fld.coeffs @ C.T


def project_nodal(values, grid: Grid, truncation: int) -> np.ndarray:
    """Transpose of ``synthesize``'s linear part: ``C^T V C``.

    Maps a nodal sensitivity ``dF/du(x)`` to ``dF/dc_kl``.  The (0, 0) entry
    is zeroed because that coefficient is not a free parameter.
    """
    C = cosine_matrix(grid.n, truncation)
    out = C.T @ np.asarray(values) @ C
    out[..., 0, 0] = 0.0
    return out


def cm_norm(prior: FieldPrior, fld: SpectralField) -> float:
    """``J(u) = 0.5 ||u - m||_E^2`` evaluated in coefficient space."""
    if fld.truncation != prior.truncation:
        raise ValueError(
            f"field truncation {fld.truncation} does not match prior truncation {prior.truncation}"
        )
    return 0.5 * float(np.sum(prior.cm_weights() * fld.coeffs**2))


def cm_gradient(prior: FieldPrior, fld: SpectralField) -> np.ndarray:
    return prior.cm_weights() * fld.coeffs


def pointwise_variance(prior: FieldPrior, x: float, y: float) -> float:
    """Truncated analytic variance of the field at ``(x, y)``."""
    k = np.arange(prior.truncation + 1)
    nk = np.where(k > 0, np.sqrt(2.0), 1.0)
    phi = np.outer(nk * np.cos(k * np.pi * x), nk * np.cos(k * np.pi * y))
    return float(np.sum(prior.std() ** 2 * phi**2))


# ---------------------------------------------------------------------------
# persistence: JSON header + coefficient matrix


def save_field(fld: SpectralField, prior: FieldPrior | None, path, binary: bool = False) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    header = {"mean": fld.mean, "truncation": fld.truncation}
    if prior is not None:
        header.update(alpha=prior.alpha, scale=prior.scale)
    header["format"] = "binary" if binary else "csv"
    with open(path / "header.json", "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if binary:
        write_binary_grid(path / "coeffs.bin", fld.coeffs)
    else:
        write_csv_matrix(path / "coeffs.csv", fld.coeffs)


def load_field(path) -> SpectralField:
    path = Path(path)
    with open(path / "header.json") as fh:
        header = json.load(fh)
    if header.get("format") == "binary":
        coeffs = read_binary_grid(path / "coeffs.bin")
    else:
        coeffs = read_csv_matrix(path / "coeffs.csv")
    return SpectralField(header["mean"], coeffs)
