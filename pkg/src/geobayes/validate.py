"""Numerical checks of the theory at toy scale.

* ``small_ball_ratio``: Monte Carlo ratios of posterior ball probabilities,
  compared with ``exp(I(x2) - I(x1))``.
* ``fomin_check``: analytic ``-dI`` against central differences of ``I``.
* ``assumptions_audit``: empirical constants for the potential and the
  shrinking-set integral along a geometry path.
* ``manufactured_error_ratio`` / ``interface_check``: solver accuracy.

Balls use the max-norm ``max(|c - c0|_inf, |b - b0|_inf)`` so that a product
ball is a product of coordinate boxes.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import darcy, gfield
from .geometry import model_from_tag, region_masks
from .gfield import SpectralField
from .grid import Grid
from .io_core import DEFAULT_PRIORS, seeded_rng
from .posterior import (
    GeometricPrior,
    Interval,
    Posterior,
    Sloped,
    default_geometric_prior,
    field_priors,
    sample_prior,
)


class StencilError(ValueError):
    """The finite-difference stencil leaves the support or crosses a mask change."""


# ---------------------------------------------------------------------------
# toy posterior


@dataclass
class ToyPosterior:
    """A few cosine coefficients plus scalar geometry parameters.

    ``Phi(c, b) = |G(c, b) - y|^2 / (2 gamma^2)`` with the smooth map
    ``G(c, b) = W c + V tanh(b) + q |c|^2``; ``y=None`` gives ``Phi = 0``.
    """

    modes: tuple = ((1, 0), (0, 1))
    alpha: float = 1.4
    scale: float = 25.0
    geom_prior: GeometricPrior = field(
        default_factory=lambda: GeometricPrior(1, (Sloped(0, -2.0, 2.0, 0.2),))
    )
    W: np.ndarray | None = None
    V: np.ndarray | None = None
    q: np.ndarray | None = None
    y: np.ndarray | None = None
    gamma: float = 1.0

    def __post_init__(self):
        if len(self.modes) > 3 or len(self.modes) + self.geom_prior.k > 5:
            raise ValueError("toy posterior is limited to 3 coefficients and 5 dimensions in total")
        if any(k == 0 and l == 0 for k, l in self.modes):
            raise ValueError("the (0, 0) mode is not a free coefficient")

    @property
    def dim(self) -> tuple[int, int]:
        return len(self.modes), self.geom_prior.k

    @property
    def variances(self) -> np.ndarray:
        lam = np.array([np.pi**2 * (k * k + l * l) for k, l in self.modes])
        return self.scale * lam ** (-self.alpha)

    def _G(self, C, B):
        return C @ self.W.T + np.tanh(B) @ self.V.T + np.sum(C**2, axis=-1, keepdims=True) * self.q

    def phi_batch(self, C, B) -> np.ndarray:
        C, B = np.atleast_2d(C), np.atleast_2d(B)
        if self.y is None:
            return np.zeros(C.shape[0])
        r = self._G(C, B) - self.y
        return 0.5 * np.sum(r**2, axis=1) / self.gamma**2

    def phi(self, c, b) -> float:
        return float(self.phi_batch(c, b)[0])

    def J(self, c) -> float:
        c = np.asarray(c, dtype=float)
        return 0.5 * float(np.sum(c**2 / self.variances))

    def K(self, b) -> float:
        return -self.geom_prior.log_density(b)

    def total(self, c, b) -> float:
        k = self.K(b)
        if math.isinf(k):
            return math.inf
        return self.phi(c, b) + self.J(c) + k

    def gradient(self, c, b) -> tuple[np.ndarray, np.ndarray]:
        c, b = np.asarray(c, dtype=float), np.asarray(b, dtype=float)
        gc = c / self.variances
        gb = -self.geom_prior.grad_log_density(b)
        if self.y is not None:
            r = (self._G(c[None], b[None])[0] - self.y) / self.gamma**2
            gc = gc + self.W.T @ r + 2 * float(self.q @ r) * c
            gb = gb + (self.V.T @ r) / np.cosh(b) ** 2
        return gc, gb

    def sample_prior(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        C = rng.standard_normal((n, len(self.modes))) * np.sqrt(self.variances)
        return C, _sample_geom(self.geom_prior, n, rng)


def _sample_geom(prior: GeometricPrior, n: int, rng) -> np.ndarray:
    """Vectorised draws for priors made of single-parameter factors."""
    out = np.empty((n, prior.k))
    for f in prior.factors:
        if isinstance(f, Sloped):
            w = f.hi - f.lo
            c = f.slope * w / 2
            u = rng.uniform(size=n)
            t = u if abs(c) < 1e-14 else ((c - 1) + np.sqrt((1 - c) ** 2 + 4 * c * u)) / (2 * c)
            out[:, f.idx] = f.lo + w * t
        elif len(f.indices) == 1:
            out[:, f.idx] = rng.uniform(f.lo, f.hi, n)
        else:
            raise ValueError("vectorised sampling supports single-parameter factors only")
    return out


def make_toy(rng: np.random.Generator, n_modes: int = 2, n_geom: int = 1, n_data: int = 3,
             gamma: float = 1.0, with_data: bool = True, scale: float = 25.0) -> ToyPosterior:
    """Random smooth toy posterior with a non-constant geometric density."""
    modes = ((1, 0), (0, 1), (1, 1))[:n_modes]
    factors = tuple(Sloped(i, -2.0, 2.0, 0.2) for i in range(n_geom))
    toy = ToyPosterior(modes=modes, scale=scale, geom_prior=GeometricPrior(n_geom, factors), gamma=gamma)
    if with_data:
        toy.W = 0.5 * rng.standard_normal((n_data, n_modes))
        toy.V = 0.5 * rng.standard_normal((n_data, n_geom))
        toy.q = 0.1 * rng.standard_normal(n_data)
        toy.y = 0.5 * rng.standard_normal(n_data)
    return toy


def random_pairs(toy: ToyPosterior, n: int, rng: np.random.Generator, margin: float = 0.5) -> list:
    """``n`` pairs of points in ``E x int(S)`` kept ``margin`` away from the boundary."""
    lo, hi = toy.geom_prior.box()
    sd = np.sqrt(toy.variances)
    pairs = []
    for _ in range(n):
        pts = []
        for _ in range(2):
            c = 0.5 * sd * rng.standard_normal(sd.size)
            b = rng.uniform(lo + margin, hi - margin)
            pts.append((c, b))
        pairs.append(tuple(pts))
    return pairs


# ---------------------------------------------------------------------------
# small-ball ratios


@dataclass
class SmallBallResult:
    deltas: np.ndarray
    ratio: np.ndarray
    se: np.ndarray
    hits: np.ndarray  # (2, len(deltas))
    target: float  # exp(I(x2) - I(x1))
    n_mc: int

    def z_scores(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return (self.ratio - self.target) / self.se


def small_ball_ratio(toy: ToyPosterior, x1, x2, deltas, n_mc: int, rng: np.random.Generator,
                     chunk: int = 1_000_000) -> SmallBallResult:
    """Estimate ``mu(B_delta(x1)) / mu(B_delta(x2))`` by prior sampling with ``exp(-Phi)`` weights."""
    deltas = np.asarray(deltas, dtype=float)
    if np.any(np.diff(deltas) >= 0):
        raise ValueError("deltas must be strictly decreasing")
    points = [(np.asarray(c, dtype=float), np.asarray(b, dtype=float)) for c, b in (x1, x2)]
    for c, b in points:
        if math.isinf(toy.K(b)):
            raise ValueError("ball centres must lie in the geometric support")
    nd = deltas.size
    s1 = np.zeros((2, nd))
    s2 = np.zeros((2, nd))
    cross = np.zeros(nd)
    hits = np.zeros((2, nd), dtype=np.int64)
    done = 0
    while done < n_mc:
        m = min(chunk, n_mc - done)
        C, B = toy.sample_prior(m, rng)
        dist = [np.maximum(np.abs(C - c).max(axis=1), np.abs(B - b).max(axis=1)) for c, b in points]
        near = (dist[0] <= deltas[0]) | (dist[1] <= deltas[0])
        w = np.zeros(m)
        if near.any():
            w[near] = np.exp(-toy.phi_batch(C[near], B[near]))
        for j, d in enumerate(deltas):
            h0, h1 = dist[0] <= d, dist[1] <= d
            for k, h in enumerate((h0, h1)):
                s1[k, j] += w[h].sum()
                s2[k, j] += (w[h] ** 2).sum()
                hits[k, j] += int(h.sum())
            cross[j] += (w[h0 & h1] ** 2).sum()
        done += m
    m1, m2 = s1 / n_mc
    v1 = (s2[0] / n_mc - m1**2) / n_mc
    v2 = (s2[1] / n_mc - m2**2) / n_mc
    cov = (cross / n_mc - m1 * m2) / n_mc
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = m1 / m2
        rel_var = v1 / m1**2 + v2 / m2**2 - 2 * cov / (m1 * m2)
        se = np.abs(ratio) * np.sqrt(np.maximum(rel_var, 0.0))
    empty = (hits == 0).any(axis=0)
    if empty.any():
        warnings.warn("a ball received no prior samples; widen delta or raise n_mc", RuntimeWarning)
        ratio = np.where(empty, np.nan, ratio)
    target = math.exp(toy.total(*points[1]) - toy.total(*points[0]))
    return SmallBallResult(deltas, ratio, se, hits, target, n_mc)


# ---------------------------------------------------------------------------
# Fomin derivative


def _shift(u, h, t):
    if isinstance(u, list):
        return [SpectralField(f.mean, f.coeffs + t * hi) for f, hi in zip(u, h)]
    return np.asarray(u, dtype=float) + t * np.asarray(h, dtype=float)


def _pair_dot(g, h) -> float:
    if isinstance(g, list):
        return float(sum(np.sum(gi * hi) for gi, hi in zip(g, h)))
    return float(np.dot(np.ravel(g), np.ravel(h)))


@dataclass
class FominReport:
    max_rel_error: float
    analytic: np.ndarray
    finite_difference: np.ndarray
    step: float


def _check_stencil(target, a, b, step):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    for s in (-step, step):
        if not target.geom_prior.contains(a + s * b):
            raise StencilError("geometry too close to the support boundary for the stencil")
    if isinstance(target, Posterior) and np.any(b):
        ref = region_masks(target.model, a, target.grid).index
        for s in (-step, step):
            if not np.array_equal(region_masks(target.model, a + s * b, target.grid).index, ref):
                raise StencilError("geometry stencil crosses a nodal mask change")


def fomin_check(target, u, a, directions, step: float = 1e-5) -> FominReport:
    """Compare ``-d_(h,b) I`` (analytic) with ``-(I(x + t d) - I(x - t d)) / 2t``.

    ``target`` is a ``Posterior`` (``u`` a list of fields, ``h`` a list of
    coefficient arrays) or a ``ToyPosterior`` (``u`` and ``h`` vectors).
    """
    a = np.asarray(a, dtype=float)
    g_u, g_a = target.gradient(u, a)
    analytic, fd = [], []
    for h, b in directions:
        b = np.asarray(b, dtype=float)
        _check_stencil(target, a, b, step)
        analytic.append(-(_pair_dot(g_u, h) + float(g_a @ b)))
        hi = target.total(_shift(u, h, step), a + step * b)
        lo = target.total(_shift(u, h, -step), a - step * b)
        fd.append(-(hi - lo) / (2 * step))
    analytic, fd = np.array(analytic), np.array(fd)
    scale = np.maximum(np.abs(analytic), np.abs(fd))
    rel = np.where(scale > 0, np.abs(analytic - fd) / np.where(scale > 0, scale, 1.0), 0.0)
    return FominReport(float(rel.max()), analytic, fd, step)


def random_directions(target, u, a, n: int, rng: np.random.Generator, step: float = 1e-5,
                      geometry: bool = True, max_tries: int = 100) -> list:
    """Random ``(h, b)`` pairs; ``h`` is smooth (finite Cameron-Martin norm).

    Geometry parts that would make the stencil cross a mask change are redrawn.
    """
    out = []
    a = np.asarray(a, dtype=float)
    widths = target.geom_prior.widths
    for _ in range(n):
        for _ in range(max_tries):
            if isinstance(target, Posterior):
                h = [gfield.smoothed_sample(p, rng).coeffs for p in target.priors]
            else:
                h = rng.standard_normal(len(target.modes)) * np.sqrt(target.variances)
            b = 0.1 * widths * rng.standard_normal(a.size) if geometry else np.zeros(a.size)
            try:
                _check_stencil(target, a, b, step)
            except StencilError:
                continue
            out.append((h, b))
            break
        else:
            raise StencilError("could not draw a geometry direction that avoids mask changes")
    return out


# ---------------------------------------------------------------------------
# assumptions audit


def _x_norm(fields, grid: Grid) -> float:
    """Product sup-norm ``max_i sup |u_i|`` on the nodes."""
    return max(float(np.abs(gfield.synthesize(f, grid)).max()) for f in fields)


def _field_diff(u, v):
    return [SpectralField(f.mean - g.mean, f.coeffs - g.coeffs) for f, g in zip(u, v)]


def _ball_fields(post: Posterior, r: float, rng) -> list:
    """Prior draw with each fluctuation rescaled into the sup-norm ball of radius ``r``."""
    out = []
    for p in post.priors:
        fl = gfield.sample(p, rng)
        fluct = SpectralField(0.0, fl.coeffs)
        sup = float(np.abs(gfield.synthesize(fluct, post.grid)).max())
        t = min(1.0, r / sup) if sup > 0 else 1.0
        out.append(SpectralField(p.mean, t * fl.coeffs))
    return out


def shrinking_set_integrals(post: Posterior, fields, a, b, ts) -> np.ndarray:
    """``max_i int_{A_i(a) sym-diff A_i(a + t b)} |grad p|^2`` for each ``t`` in ``ts``."""
    state = post.state(fields, a)
    grid = post.grid
    gx, gy = np.gradient(state.solution.p, grid.h, grid.h)
    e = (gx**2 + gy**2) * grid.weights
    ref = state.masks.index
    out = []
    for t in ts:
        idx = region_masks(post.model, np.asarray(a) + t * np.asarray(b), grid).index
        vals = [e[(ref == i) != (idx == i)].sum() for i in range(1, post.model.n_regions + 1)]
        out.append(max(vals))
    return np.array(out)


def assumptions_audit(post: Posterior, n_pairs: int, r: float, rng: np.random.Generator,
                      n_paths: int = 5, path_steps: int = 8) -> dict:
    """Empirical checks of the potential's lower bound, continuity and Lipschitz constants.

    ``M2`` bounds ``|Phi(y1) - Phi(y2)| / |y1 - y2|`` and ``M3`` bounds
    ``|Phi(u1) - Phi(u2)| / |u1 - u2|_X`` over states in the radius-``r``
    ball.  ``M3`` is reported for ``n_pairs`` and ``2 n_pairs`` samples (the
    larger set extends the smaller one).
    """
    if post.y is None:
        raise ValueError("the audit needs data")
    grid = post.grid
    y1 = post.y
    phis, m2, m3 = [], [], []
    for _ in range(2 * n_pairs):
        a = post.geom_prior.sample(rng)
        u1 = _ball_fields(post, r, rng)
        u2 = _ball_fields(post, r, rng)
        s1 = post.state(u1, a)
        p1 = post.phi_of(s1)
        p2 = post.phi_of(post.state(u2, a))
        y2 = y1 + post.gamma * rng.standard_normal(y1.size)
        p1y2 = 0.5 * float(np.sum((s1.y_pred - y2) ** 2)) / post.gamma**2
        phis += [p1, p2, p1y2]
        m2.append(abs(p1 - p1y2) / float(np.linalg.norm(y1 - y2)))
        m3.append(abs(p1 - p2) / _x_norm(_field_diff(u1, u2), grid))
    m3_half, m3_full = max(m3[:n_pairs]), max(m3)

    # continuity in a and the shrinking-set integral along a_n -> a
    ts = 0.2 * 0.5 ** np.arange(path_steps)
    lo, hi = post.geom_prior.box()
    cont, shrink = [], []
    for _ in range(n_paths):
        for _ in range(100):
            a = post.geom_prior.sample(rng)
            b = (hi - lo) * rng.uniform(-1, 1, a.size) * 0.5
            if all(post.geom_prior.contains(a + t * b) for t in ts):
                break
        else:
            raise RuntimeError("could not find a feasible geometry path")
        u = _ball_fields(post, r, rng)
        base = post.potential(u, a)
        cont.append([abs(post.potential(u, a + t * b) - base) for t in ts])
        shrink.append(shrinking_set_integrals(post, u, a, b, ts))
    cont = np.mean(cont, axis=0)
    shrink = np.mean(shrink, axis=0)
    steps = np.diff(shrink)
    return {
        "phi_min": float(min(phis)),
        "lower_bound_holds": bool(min(phis) >= 0.0),
        "M2": float(max(m2)),
        "M3": m3_half,
        "M3_doubled": m3_full,
        "M3_doubling_ratio": m3_full / m3_half if m3_half > 0 else math.inf,
        "path_t": ts.tolist(),
        "continuity_gap": cont.tolist(),
        "shrinking_integral": shrink.tolist(),
        "shrinking_decreases": bool(shrink[-1] <= shrink[0] and np.mean(steps) <= 0),
    }


# ---------------------------------------------------------------------------
# solver accuracy


def manufactured_error(n: int) -> float:
    """Max nodal error for ``p* = sin(pi x) sin(pi y)``, ``kappa = 1``."""
    grid = Grid(n)
    problem = darcy.PdeProblem(f=lambda X, Y: 2 * np.pi**2 * np.sin(np.pi * X) * np.sin(np.pi * Y), g=0.0)
    p = darcy.solve(problem, np.ones((n, n)), grid).p
    X, Y = grid.mesh
    return float(np.abs(p - np.sin(np.pi * X) * np.sin(np.pi * Y)).max())


def manufactured_error_ratio(n_coarse: int = 32, n_fine: int = 64) -> float:
    return manufactured_error(n_coarse) / manufactured_error(n_fine)


def interface_check(n: int = 64) -> dict:
    """Two-layer permeability (1 left of x = 1/2, e right of it) against the 1D solution.

    Returns the numerical pressure on the interface and the exact ``e/(1+e)``.
    When the interface falls between nodes the value is the flux-consistent
    edge-midpoint pressure.
    """
    grid = Grid(n)
    X, _ = grid.mesh
    k = np.where(X < 0.5, 1.0, np.e)
    exact = np.e / (1 + np.e)

    def trace(X, Y):
        return np.where(X < 0.5, 2 * exact * X, exact + (1 - exact) * (2 * X - 1))

    p = darcy.solve(darcy.PdeProblem(f=0.0, g=trace), k, grid).p
    x = grid.coords
    j = int(np.searchsorted(x, 0.5))
    if math.isclose(x[j], 0.5):
        value = p[j]
    else:
        value = darcy.interface_value(p[j - 1], p[j], k[j - 1], k[j])
    err = float(np.abs(value - exact).max())
    return {"value": float(np.mean(value)), "exact": exact, "max_error": err}


# ---------------------------------------------------------------------------
# check runners (used by the ``validate`` subcommand and the acceptance suite)

MODELS = ("layer2", "fault3", "channel")


def synthetic_posterior(tag: str, n: int, truncation: int, rng: np.random.Generator,
                        geom_prior: GeometricPrior | None = None, problem=None, setup=None) -> Posterior:
    """Posterior whose data are a noisy forward solve of a prior draw on the same grid."""
    model = model_from_tag(tag)
    post = Posterior(
        model, field_priors(DEFAULT_PRIORS[tag], truncation),
        geom_prior or default_geometric_prior(model), Grid(n),
        problem or darcy.PdeProblem(), setup or darcy.default_setup(),
    )
    fields, a = sample_prior(post, rng)
    y = darcy.forward(fields, a, model, post.problem, post.setup, post.grid)
    return post.with_data(y + post.gamma * rng.standard_normal(y.size))


def sloped_prior(prior: GeometricPrior, slope: float = 0.5) -> GeometricPrior:
    """Replace every interval factor by a linear density with the given slope."""
    factors = []
    for f in prior.factors:
        if isinstance(f, Interval):
            s = slope / (f.hi - f.lo)
            factors.append(Sloped(f.idx, f.lo, f.hi, s))
        else:
            factors.append(f)
    return GeometricPrior(prior.k, tuple(factors))


def gradient_check(post: Posterior, fields, a, n_dirs: int, rng: np.random.Generator,
                   step: float = 1e-5) -> float:
    """Max relative error of the adjoint ``dPhi`` against central differences."""
    state = post.state(fields, a)
    g = post.grad_phi_fields(fields, a, state)
    errs = []
    for _ in range(n_dirs):
        h = [gfield.smoothed_sample(p, rng).coeffs for p in post.priors]
        an = _pair_dot(g, h)
        fd = (post.potential(_shift(fields, h, step), a) - post.potential(_shift(fields, h, -step), a)) / (2 * step)
        errs.append(abs(an - fd) / max(abs(an), abs(fd), 1e-300))
    return float(max(errs))


def _interior_geometry(post: Posterior, rng, step: float, margin: float = 0.02) -> np.ndarray:
    lo, hi = post.geom_prior.box()
    for _ in range(1000):
        a = post.geom_prior.sample(rng)
        if np.all(a > lo + margin * (hi - lo)) and np.all(a < hi - margin * (hi - lo)) and \
                post.geom_prior.contains(a):
            return a
    raise RuntimeError("could not sample an interior geometry")


def check_pde() -> dict:
    ratio = manufactured_error_ratio(32, 64)
    iface = interface_check(64)
    return {"error_ratio": ratio, "interface": iface,
            "pass": bool(3.5 <= ratio <= 4.5 and iface["max_error"] <= 1e-3)}


def check_bounds(n: int, n_draws: int, seed: int) -> dict:
    out = {}
    for tag in MODELS:
        model = model_from_tag(tag)
        post = Posterior(model, field_priors(DEFAULT_PRIORS[tag], n - 1), default_geometric_prior(model), Grid(n))
        rng = seeded_rng(seed, f"validate.bound.{tag}")
        violations = 0
        for _ in range(n_draws):
            fields, a = sample_prior(post, rng)
            rep = darcy.solution_bound_check(fields, a, model, post.problem, post.grid)
            violations += not rep["holds"]
        out[tag] = violations
    return {"violations": out, "pass": not any(out.values())}


def check_adjoint(n: int, truncation: int, n_dirs: int, seed: int) -> dict:
    errs = {}
    for tag in MODELS:
        rng = seeded_rng(seed, f"validate.adjoint.{tag}")
        post = synthetic_posterior(tag, n, truncation, rng)
        fields, a = sample_prior(post, rng)
        errs[tag] = gradient_check(post, fields, a, n_dirs, rng)
    return {"max_rel_error": errs, "pass": max(errs.values()) <= 1e-4}


def check_fomin(n: int, truncation: int, n_dirs: int, seed: int, step: float = 1e-5) -> dict:
    """Full ``I`` including ``J`` and a non-constant geometric density ``K``."""
    errs = {}
    for tag in MODELS:
        rng = seeded_rng(seed, f"validate.fomin.{tag}")
        gp = sloped_prior(default_geometric_prior(model_from_tag(tag)))
        post = synthetic_posterior(tag, n, truncation, rng, geom_prior=gp)
        fields = [gfield.smoothed_sample(p, rng) for p in post.priors]
        for _ in range(20):
            a = _interior_geometry(post, rng, step)
            try:
                dirs = random_directions(post, fields, a, n_dirs, rng, step)
                break
            except StencilError:
                continue
        else:
            raise StencilError(f"no usable geometry found for {tag}")
        errs[tag] = fomin_check(post, fields, a, dirs, step).max_rel_error
    return {"max_rel_error": errs, "pass": max(errs.values()) <= 1e-4}


def check_small_ball(n_pairs: int, n_mc: int, seed: int, delta: float = 0.125) -> dict:
    rng = seeded_rng(seed, "validate.smallball")
    toy = make_toy(rng)
    pairs = random_pairs(toy, n_pairs, rng)
    rows = []
    for x1, x2 in pairs:
        r = small_ball_ratio(toy, x1, x2, [4 * delta, 2 * delta, delta], n_mc, rng)
        rows.append({"ratio": float(r.ratio[-1]), "se": float(r.se[-1]), "target": r.target,
                     "z": float(r.z_scores()[-1])})
    return {"pairs": rows, "pass": all(abs(r["z"]) <= 3 for r in rows)}


def check_audit(n: int, truncation: int, n_pairs: int, r: float, seed: int) -> dict:
    rng = seeded_rng(seed, "validate.audit")
    post = synthetic_posterior("layer2", n, truncation, rng)
    rep = assumptions_audit(post, n_pairs, r, rng)
    rep["pass"] = bool(rep["lower_bound_holds"] and 0.5 <= rep["M3_doubling_ratio"] <= 2
                       and rep["shrinking_decreases"])
    return rep


CHECKS = ("pde", "bound", "adjoint", "fomin", "smallball", "audit")


def run_checks(names, seed: int = 0, n: int = 32, n_mc: int = 10**6) -> dict:
    truncation = n - 1
    runners = {
        "pde": lambda: check_pde(),
        "bound": lambda: check_bounds(n, 100, seed),
        "adjoint": lambda: check_adjoint(n, truncation, 10, seed),
        "fomin": lambda: check_fomin(n, truncation, 10, seed),
        "smallball": lambda: check_small_ball(5, n_mc, seed),
        "audit": lambda: check_audit(n, truncation, 20, 3.0, seed),
    }
    unknown = [c for c in names if c not in runners]
    if unknown:
        raise ValueError(f"unknown checks: {', '.join(unknown)}")
    return {name: runners[name]() for name in names}
