"""Finite-difference Darcy solver, mollified observations and adjoint gradients.

Discretisation: 5-point stencil on the vertex grid with edge conductivities
equal to the harmonic mean of the two nodal permeabilities.  Rows are scaled
by ``h^2``, so interior node ``a`` carries the equation
``sum_e k_e (p_a - p_b) = h^2 f_a``; boundary nodes are Dirichlet and are
eliminated into the right-hand side.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import gfield
from .geometry import GeometryModel, RegionMasks, region_masks
from .grid import Grid

RESIDUAL_TOL = 1e-10

SIGMAS = {"exp": (np.exp, np.exp)}


class SolverError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# problem description


def _expression(spec, grid: Grid) -> np.ndarray:
    X, Y = grid.mesh
    if callable(spec):
        out = spec(X, Y)
    elif isinstance(spec, (int, float)):
        out = float(spec)
    else:
        namespace = {
            "x": X, "y": Y, "pi": np.pi, "e": np.e,
            "sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs,
            "where": np.where,
        }
        out = eval(str(spec), {"__builtins__": {}}, namespace)  # noqa: S307
    return np.broadcast_to(np.asarray(out, dtype=float), X.shape).copy()


@dataclass(frozen=True)
class PdeProblem:
    """Source ``f``, Dirichlet data ``g`` and coefficient map ``sigma``.

    ``f`` and ``g`` may be numbers, expressions in ``x`` and ``y`` (as
    strings), or callables ``(X, Y) -> array``.
    """

    f: object = "0"
    g: object = "1 + y"
    sigma: str = "exp"

    def __post_init__(self):
        if self.sigma not in SIGMAS:
            raise ValueError(f"unsupported coefficient map {self.sigma!r}")

    def nodal_f(self, grid: Grid) -> np.ndarray:
        return _expression(self.f, grid)

    def nodal_g(self, grid: Grid) -> np.ndarray:
        return _expression(self.g, grid)

    def kappa(self, u_a) -> np.ndarray:
        return SIGMAS[self.sigma][0](u_a)

    def dkappa(self, u_a) -> np.ndarray:
        return SIGMAS[self.sigma][1](u_a)


@dataclass(frozen=True)
class ObservationSetup:
    points: tuple  # ((x, y), ...)
    epsilon: float = 0.05
    gamma: float = 0.01

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("mollifier width must be positive")
        if self.gamma < 0:
            raise ValueError("noise level must be nonnegative")
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must be a sequence of (x, y) pairs")
        if np.any(pts <= 0) or np.any(pts >= 1):
            raise ValueError("observation points must be interior to the unit square")

    @property
    def count(self) -> int:
        return len(self.points)


def lattice_points(count: int = 25) -> tuple:
    """``m x m`` interior lattice at ``(i/(m+1), j/(m+1))``."""
    m = int(round(np.sqrt(count)))
    if m * m != count:
        raise ValueError(f"observation count {count} is not a perfect square")
    c = np.arange(1, m + 1) / (m + 1)
    return tuple((float(x), float(y)) for x in c for y in c)


def default_setup(count: int = 25, epsilon: float = 0.05, gamma: float = 0.01) -> ObservationSetup:
    return ObservationSetup(lattice_points(count), epsilon, gamma)


@lru_cache(maxsize=16)
def _observation_matrix(n: int, points: tuple, epsilon: float) -> np.ndarray:
    grid = Grid(n)
    X, Y = grid.mesh
    pts = np.asarray(points)
    d2 = (X.ravel()[None, :] - pts[:, :1]) ** 2 + (Y.ravel()[None, :] - pts[:, 1:]) ** 2
    # epsilon enters as a variance: exp(-|x - y|^2 / (2 eps))
    kernel = np.exp(-d2 / (2 * epsilon)) / (2 * np.pi * epsilon)
    W = kernel * grid.weights.ravel()[None, :]
    W /= W.sum(axis=1, keepdims=True)
    W.setflags(write=False)
    return W


def observation_matrix(setup: ObservationSetup, grid: Grid) -> np.ndarray:
    """Rows are renormalised quadrature weights of the Gaussian mollifier."""
    return _observation_matrix(grid.n, tuple(map(tuple, setup.points)), float(setup.epsilon))


def observe(pressure, setup: ObservationSetup, grid: Grid) -> np.ndarray:
    return observation_matrix(setup, grid) @ np.asarray(pressure).ravel()


# ---------------------------------------------------------------------------
# assembly and solve


@dataclass(frozen=True)
class _Stencil:
    ea: np.ndarray  # edge endpoints, flat node indices
    eb: np.ndarray
    interior: np.ndarray  # flat indices of interior nodes
    pos: np.ndarray  # node -> interior position, -1 on the boundary


@lru_cache(maxsize=16)
def _stencil(n: int) -> _Stencil:
    idx = np.arange(n * n).reshape(n, n)
    ea = np.concatenate([idx[:-1, :].ravel(), idx[:, :-1].ravel()])
    eb = np.concatenate([idx[1:, :].ravel(), idx[:, 1:].ravel()])
    bnd = Grid(n).boundary.ravel()
    interior = np.flatnonzero(~bnd)
    pos = np.full(n * n, -1)
    pos[interior] = np.arange(interior.size)
    return _Stencil(ea, eb, interior, pos)


def edge_conductivity(kappa, grid: Grid) -> np.ndarray:
    st = _stencil(grid.n)
    k = np.asarray(kappa).ravel()
    ka, kb = k[st.ea], k[st.eb]
    return 2 * ka * kb / (ka + kb)


def assemble(kappa, grid: Grid) -> tuple[sp.csc_matrix, sp.csr_matrix]:
    """Interior matrix ``A`` and interior-boundary coupling ``B`` (``L = [A B]``)."""
    st = _stencil(grid.n)
    w = edge_conductivity(kappa, grid)
    N = grid.n * grid.n
    rows = np.concatenate([st.ea, st.eb, st.ea, st.eb])
    cols = np.concatenate([st.ea, st.eb, st.eb, st.ea])
    vals = np.concatenate([w, w, -w, -w])
    L = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
    L_int = L[st.interior]
    A = L_int[:, st.interior].tocsc()
    boundary = np.flatnonzero(st.pos < 0)
    B = L_int[:, boundary]
    return A, B


@dataclass
class PressureSolution:
    p: np.ndarray  # (n, n)
    kappa: np.ndarray  # (n, n)
    grid: Grid
    lu: object
    residual: float

    def adjoint(self, rhs_nodal) -> np.ndarray:
        """Solve ``A lam = rhs`` on interior nodes; returns nodal ``lam`` (0 on the boundary).

        ``rhs_nodal`` may carry a trailing batch axis: shape ``(n*n,)`` or ``(n*n, m)``.
        """
        st = _stencil(self.grid.n)
        rhs = np.asarray(rhs_nodal)
        lam = np.zeros(rhs.shape)
        lam[st.interior] = self.lu.solve(np.ascontiguousarray(rhs[st.interior]))
        return lam


def solve(problem: PdeProblem, kappa, grid: Grid) -> PressureSolution:
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape != (grid.n, grid.n):
        raise ValueError(f"permeability shape {kappa.shape} does not match grid {grid.n}")
    if not np.all(np.isfinite(kappa)) or np.any(kappa <= 0):
        raise ValueError("permeability must be finite and strictly positive")
    st = _stencil(grid.n)
    A, B = assemble(kappa, grid)
    g = problem.nodal_g(grid).ravel()
    f = problem.nodal_f(grid).ravel()
    boundary = np.flatnonzero(st.pos < 0)
    b = grid.h**2 * f[st.interior] - B @ g[boundary]
    lu = splu(A)
    q = lu.solve(b)
    res = np.linalg.norm(A @ q - b)
    scale = np.linalg.norm(b)
    rel = res / scale if scale > 0 else res
    if not np.isfinite(rel) or rel > RESIDUAL_TOL:
        raise SolverError(f"linear solve failed: relative residual {rel:.3e} > {RESIDUAL_TOL:g}")
    p = g.copy()
    p[st.interior] = q
    return PressureSolution(p.reshape(grid.n, grid.n), kappa, grid, lu, float(rel))


def interface_value(p_left, p_right, k_left, k_right):
    """Pressure at the midpoint of an edge, consistent with harmonic averaging."""
    return (k_left * p_left + k_right * p_right) / (k_left + k_right)


# ---------------------------------------------------------------------------
# construction map and forward model


def construct(fields, a, model: GeometryModel, grid: Grid, masks: RegionMasks | None = None):
    """Nodal ``u^a = sum_i u_i 1_{A_i(a)}``; returns ``(u_a, masks)``."""
    if len(fields) != model.n_regions:
        raise ValueError(f"{model.tag} needs {model.n_regions} fields, got {len(fields)}")
    if masks is None:
        masks = region_masks(model, a, grid)
    u_a = np.zeros((grid.n, grid.n))
    for i, fld in enumerate(fields):
        sel = masks.index == i + 1
        u_a[sel] = gfield.synthesize(fld, grid)[sel]
    return u_a, masks


@dataclass
class ForwardState:
    u_a: np.ndarray
    masks: RegionMasks
    solution: PressureSolution
    y_pred: np.ndarray


def forward_state(fields, a, model, problem, setup, grid, masks=None) -> ForwardState:
    u_a, masks = construct(fields, a, model, grid, masks)
    sol = solve(problem, problem.kappa(u_a), grid)
    return ForwardState(u_a, masks, sol, observe(sol.p, setup, grid))


def forward(fields, a, model, problem, setup, grid) -> np.ndarray:
    return forward_state(fields, a, model, problem, setup, grid).y_pred


# ---------------------------------------------------------------------------
# adjoint sensitivities


def kappa_sensitivity(sol: PressureSolution, lam) -> np.ndarray:
    """``d/dkappa`` of ``lam^T R`` contracted with the state; nodal, batch-aware.

    For a functional F with adjoint ``lam`` (``A lam = dF/dp``) this returns
    ``dF/dkappa`` at every node.  ``lam`` has shape ``(n*n,)`` or ``(n*n, m)``.
    """
    st = _stencil(sol.grid.n)
    p = sol.p.ravel()
    k = sol.kappa.ravel()
    lam = np.asarray(lam)
    dp = p[st.ea] - p[st.eb]
    if lam.ndim == 2:
        dp = dp[:, None]
    d_edge = -(lam[st.ea] - lam[st.eb]) * dp
    ka, kb = k[st.ea], k[st.eb]
    s = (ka + kb) ** 2
    wa, wb = 2 * kb**2 / s, 2 * ka**2 / s
    if lam.ndim == 2:
        wa, wb = wa[:, None], wb[:, None]
    out = np.zeros(lam.shape)
    np.add.at(out, st.ea, d_edge * wa)
    np.add.at(out, st.eb, d_edge * wb)
    return out


def grad_phi_nodal(state: ForwardState, y, setup: ObservationSetup, problem: PdeProblem) -> np.ndarray:
    """``dPhi/du^a`` at every node for ``Phi = |G - y|^2 / (2 gamma^2)``."""
    grid = state.solution.grid
    W = observation_matrix(setup, grid)
    r = state.y_pred - np.asarray(y)
    rhs = W.T @ r / setup.gamma**2
    lam = state.solution.adjoint(rhs)
    dk = kappa_sensitivity(state.solution, lam)
    return (dk * problem.dkappa(state.u_a).ravel()).reshape(grid.n, grid.n)


def grad_phi_fields(state: ForwardState, fields, y, setup, problem) -> list[np.ndarray]:
    """Per-field coefficient gradients of ``Phi``."""
    g = grad_phi_nodal(state, y, setup, problem)
    grid = state.solution.grid
    return [
        gfield.project_nodal(np.where(state.masks.index == i + 1, g, 0.0), grid, fld.truncation)
        for i, fld in enumerate(fields)
    ]


def observation_jacobian_nodal(state: ForwardState, setup, problem) -> np.ndarray:
    """``dG_j/du^a(x)`` as an array of shape ``(J, n, n)``; one adjoint solve per datum."""
    grid = state.solution.grid
    W = observation_matrix(setup, grid)
    lam = state.solution.adjoint(W.T)
    dk = kappa_sensitivity(state.solution, lam)
    sens = dk * problem.dkappa(state.u_a).ravel()[:, None]
    return sens.T.reshape(-1, grid.n, grid.n)


def jacobian_field(state: ForwardState, region: int, truncation: int, setup, problem) -> np.ndarray:
    """``dG/dc`` for the field of 1-based ``region``: shape ``(J, M+1, M+1)``."""
    grid = state.solution.grid
    nodal = observation_jacobian_nodal(state, setup, problem)
    nodal = nodal * (state.masks.index == region)[None]
    C = gfield.cosine_matrix(grid.n, truncation)
    out = np.einsum("ik,jil,lm->jkm", C, nodal, C, optimize=True)
    out[:, 0, 0] = 0.0
    return out


# ---------------------------------------------------------------------------
# a priori bound on the solution


def grad_norm(values, grid: Grid) -> float:
    """Discrete H1 seminorm ``sqrt(sum over edges (v_a - v_b)^2)``."""
    st = _stencil(grid.n)
    v = np.asarray(values).ravel()
    return float(np.sqrt(np.sum((v[st.ea] - v[st.eb]) ** 2)))


def source_dual_norm(problem: PdeProblem, grid: Grid) -> float:
    """Dual norm of ``phi -> h^2 sum f phi`` against the discrete H1 seminorm."""
    st = _stencil(grid.n)
    b = grid.h**2 * problem.nodal_f(grid).ravel()[st.interior]
    if not np.any(b):
        return 0.0
    A, _ = assemble(np.ones((grid.n, grid.n)), grid)
    return float(np.sqrt(b @ splu(A).solve(b)))


def harmonic_extension(problem: PdeProblem, grid: Grid) -> np.ndarray:
    lift = PdeProblem(f=0.0, g=problem.g, sigma=problem.sigma)
    return solve(lift, np.ones((grid.n, grid.n)), grid).p


def solution_bound_check(fields, a, model, problem, grid) -> dict:
    """Energy bound ``|p|_V <= (|f|_* + max kappa |G|_V) / min kappa + |G|_V``.

    ``|.|_V`` is the discrete H1 seminorm, the quantity the energy estimate
    controls; ``G`` is the discrete harmonic extension of ``g``.
    """
    u_a, _ = construct(fields, a, model, grid)
    kappa = problem.kappa(u_a)
    sol = solve(problem, kappa, grid)
    G = harmonic_extension(problem, grid)
    g_norm = grad_norm(G, grid)
    f_norm = source_dual_norm(problem, grid)
    k_min, k_max = float(kappa.min()), float(kappa.max())
    lhs = grad_norm(sol.p, grid)
    rhs = (f_norm + k_max * g_norm) / k_min + g_norm
    return {
        "lhs": lhs,
        "rhs": rhs,
        "holds": bool(lhs <= rhs * (1 + 1e-6)),
        "f_term": f_norm / k_min,
        "kappa_min": k_min,
        "kappa_max": k_max,
    }
