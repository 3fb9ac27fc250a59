"""Alternating minimisation of ``I = Phi + J + K``.

Each outer iteration moves the geometry with Nelder-Mead (fields fixed), then
updates every field in turn with Gauss-Newton steps and a backtracking line
search (geometry fixed).  When successive ``Phi`` values differ by less than
``tol`` the iterate is jittered jointly ``escape_count`` times; a jitter that
strictly lowers ``I`` restarts the loop, otherwise the run has converged.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import darcy, gfield
from .geometry import region_masks
from .gfield import SpectralField
from .posterior import OmValue, Posterior

log = logging.getLogger(__name__)


@dataclass
class MapConfig:
    tol: float = 1e-5
    max_outer: int = 100
    nm_edge: float = 0.05
    nm_maxiter: int = 200
    nm_xtol: float = 1e-6
    nm_coeffs: tuple = (1.0, 2.0, 0.5, 0.5)  # reflection, expansion, contraction, shrink
    gn_inner: int = 5
    armijo: float = 1e-4
    max_halvings: int = 30
    escape_count: int = 50
    escape_geom: float = 0.05
    escape_field: float = 0.1

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.escape_count < 1:
            raise ValueError("escape_count must be >= 1")

    @classmethod
    def from_manifest(cls, m: dict) -> "MapConfig":
        keys = ("tol", "max_outer", "nm_edge", "nm_maxiter", "nm_xtol", "gn_inner",
                "escape_count", "escape_geom", "escape_field")
        return cls(**{k: m["map"][k] for k in keys})


@dataclass
class MapResult:
    fields: list
    a: np.ndarray
    om: OmValue
    trace: list = field(default_factory=list)
    init_id: int = 0
    converged: bool = False
    n_outer: int = 0
    n_escapes: int = 0


# ---------------------------------------------------------------------------
# Nelder-Mead


class SimplexError(ValueError):
    pass


def nelder_mead(f, x0, steps, maxiter=200, xtol=1e-6, coeffs=(1.0, 2.0, 0.5, 0.5)):
    """Minimise ``f`` from ``x0``; infinite values act as a barrier.

    Returns ``(x_best, f_best, iterations)``.  The starting point stays the
    best vertex unless some vertex is strictly better, so a constant objective
    returns ``x0``.
    """
    rho, chi, gam, sig = coeffs
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    verts = [x0.copy()]
    vals = [f(x0)]
    for i in range(n):
        step = np.zeros(n)
        step[i] = steps[i]
        v = x0 + step
        fv = f(v)
        if not np.isfinite(fv):
            v = x0 - step
            fv = f(v)
        verts.append(v)
        vals.append(fv)
    verts = np.array(verts)
    vals = np.array(vals, dtype=float)
    if not np.any(np.isfinite(vals)):
        raise SimplexError("every vertex of the initial simplex is infeasible")

    it = 0
    while it < maxiter:
        order = np.argsort(vals, kind="stable")
        verts, vals = verts[order], vals[order]
        if np.max(np.abs(verts[1:] - verts[0])) < xtol:
            break
        it += 1
        c = verts[:-1].mean(axis=0)
        worst, f_worst = verts[-1], vals[-1]
        xr = c + rho * (c - worst)
        fr = f(xr)
        if vals[0] <= fr < vals[-2]:
            verts[-1], vals[-1] = xr, fr
            continue
        if fr < vals[0]:
            xe = c + chi * (xr - c)
            fe = f(xe)
            if fe < fr:
                verts[-1], vals[-1] = xe, fe
            else:
                verts[-1], vals[-1] = xr, fr
            continue
        if fr < f_worst:
            xc = c + gam * (xr - c)
            fc = f(xc)
            if fc <= fr:
                verts[-1], vals[-1] = xc, fc
                continue
        else:
            xc = c + gam * (worst - c)
            fc = f(xc)
            if fc < f_worst:
                verts[-1], vals[-1] = xc, fc
                continue
        for j in range(1, n + 1):
            verts[j] = verts[0] + sig * (verts[j] - verts[0])
            vals[j] = f(verts[j])
    order = np.argsort(vals, kind="stable")
    return verts[order[0]].copy(), float(vals[order[0]]), it


def nm_geometry(post: Posterior, fields, a0, config: MapConfig) -> tuple[np.ndarray, float]:
    """Geometry update with the fields held fixed."""
    if not np.isfinite(post.total(fields, a0)):
        raise SimplexError("initial geometry lies outside the prior support")
    steps = config.nm_edge * post.geom_prior.widths
    j = post.J(fields)
    # Phi depends on a only through the nodal masks
    cache = {}

    def objective(b):
        k = post.K(b)
        if math.isinf(k):
            return math.inf
        masks = region_masks(post.model, b, post.grid)
        key = masks.index.tobytes()
        if key not in cache:
            cache[key] = post.phi_of(post.state(fields, b, masks))
        return cache[key] + j + k

    a, val, _ = nelder_mead(
        objective, a0, steps,
        maxiter=config.nm_maxiter, xtol=config.nm_xtol, coeffs=config.nm_coeffs,
    )
    return a, val


# ---------------------------------------------------------------------------
# Gauss-Newton


def gauss_newton_direction(jac, r, gamma, d, c):
    """Solve ``(J^T J / gamma^2 + diag(d)) delta = -(J^T r / gamma^2 + d * c)``.

    ``jac`` is ``(m, p)`` with ``m`` small, so the Woodbury identity reduces
    the ``p x p`` solve to an ``m x m`` Cholesky factorisation.  Returns
    ``(delta, grad, used_fallback)``; the fallback is the preconditioned
    gradient direction ``-grad / d``.
    """
    jac = np.asarray(jac, dtype=float)
    grad = jac.T @ r / gamma**2 + d * c
    dinv = 1.0 / d
    try:
        S = gamma**2 * np.eye(jac.shape[0]) + (jac * dinv) @ jac.T
        cf = cho_factor(S)
        v = dinv * grad
        delta = -(v - dinv * (jac.T @ cho_solve(cf, jac @ v)))
        if np.all(np.isfinite(delta)) and grad @ delta < 0:
            return delta, grad, False
    except LinAlgError:
        pass
    if not np.any(grad):
        return np.zeros_like(grad), grad, False
    return -dinv * grad, grad, True


def backtrack(objective, f0, slope, armijo=1e-4, max_halvings=30):
    """Halving line search; returns ``(t, f_t)`` or ``(0.0, f0)`` when nothing decreases."""
    t = 1.0
    for _ in range(max_halvings + 1):
        ft = objective(t)
        if ft < f0 and ft <= f0 + armijo * t * slope:
            return t, ft
        t *= 0.5
    return 0.0, f0


def gn_field(post: Posterior, fields, a, i: int, config: MapConfig) -> tuple[list, dict]:
    """Gauss-Newton updates of field ``i`` (0-based) with the others and ``a`` fixed."""
    prior = post.priors[i]
    fields = [f.copy() for f in fields]
    masks = None
    info = {"steps": 0, "fallback": 0}
    for _ in range(config.gn_inner):
        state = post.state(fields, a, masks)
        masks = state.masks
        k = post.K(a)
        I0 = post.phi_of(state) + post.J(fields) + k
        d = prior.cm_weights().ravel()
        free = d > 0
        c = fields[i].coeffs.ravel()
        if post.y is None:
            jac = np.zeros((1, c.size))
            r = np.zeros(1)
        else:
            jac = darcy.jacobian_field(state, i + 1, prior.truncation, post.setup, post.problem)
            jac = jac.reshape(jac.shape[0], -1)
            r = state.y_pred - post.y
        delta_free, grad, fallback = gauss_newton_direction(
            jac[:, free], r, post.gamma, d[free], c[free]
        )
        info["fallback"] += int(fallback)
        slope = float(grad @ delta_free)
        if slope >= 0 or not np.any(delta_free):
            break
        delta = np.zeros_like(c)
        delta[free] = delta_free
        delta = delta.reshape(fields[i].coeffs.shape)
        base = fields[i].coeffs

        def objective(t):
            trial = list(fields)
            trial[i] = SpectralField(fields[i].mean, base + t * delta)
            st = post.state(trial, a, masks)
            return post.phi_of(st) + post.J(trial) + k

        t, It = backtrack(objective, I0, slope, config.armijo, config.max_halvings)
        if t == 0.0:
            break
        fields[i] = SpectralField(fields[i].mean, base + t * delta)
        info["steps"] += 1
        if I0 - It <= 1e-12 * max(1.0, abs(I0)):
            break
    return fields, info


# ---------------------------------------------------------------------------
# the alternating loop


def initial_state(post: Posterior, rng: np.random.Generator) -> tuple[list, np.ndarray]:
    """Geometry from the prior, fields from the smoothed prior (finite ``J``)."""
    a = post.geom_prior.sample(rng)
    fields = [gfield.smoothed_sample(p, rng) for p in post.priors]
    return fields, a


def _escape(post: Posterior, fields, a, I_now, config: MapConfig, rng):
    lo, hi = post.geom_prior.box()
    widths = hi - lo
    best = None
    for _ in range(config.escape_count):
        jitter = rng.uniform(-1.0, 1.0, a.size)
        b = np.clip(a + config.escape_geom * widths * jitter, lo, hi)
        trial = []
        for p, f in zip(post.priors, fields):
            s = gfield.smoothed_sample(p, rng)
            trial.append(SpectralField(f.mean, f.coeffs + config.escape_field * s.coeffs))
        val = post.total(trial, b)
        if val < I_now and (best is None or val < best[0]):
            best = (val, trial, b)
    return best


def map_estimate(post: Posterior, fields0, a0, config: MapConfig | None = None,
                 rng: np.random.Generator | None = None, init_id: int = 0) -> MapResult:
    if config is None:
        config = MapConfig()
    if rng is None:
        raise ValueError("map_estimate needs an explicit random stream for saddle escapes")
    fields = [f.copy() for f in fields0]
    a = np.asarray(a0, dtype=float).copy()
    om = post.om(fields, a)
    if not np.isfinite(om.total):
        raise ValueError("initial state has infinite I")
    trace = [om]
    prev_phi = om.phi
    n_escapes = 0
    converged = False
    outer = 0
    while outer < config.max_outer:
        outer += 1
        a, _ = nm_geometry(post, fields, a, config)
        for i in range(len(fields)):
            fields, _ = gn_field(post, fields, a, i, config)
        om = post.om(fields, a)
        trace.append(om)
        log.debug("init %d outer %d: I=%.6g phi=%.6g", init_id, outer, om.total, om.phi)
        if abs(om.phi - prev_phi) < config.tol:
            found = _escape(post, fields, a, om.total, config, rng)
            if found is None:
                converged = True
                break
            n_escapes += 1
            _, fields, a = found
            om = post.om(fields, a)
            trace.append(om)
        prev_phi = om.phi
    return MapResult(fields, a, om, trace, init_id, converged, outer, n_escapes)
