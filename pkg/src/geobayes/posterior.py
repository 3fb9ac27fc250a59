"""Potential, geometric priors and the Onsager-Machlup functional ``I = Phi + J + K``."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import darcy, gfield
from .darcy import ForwardState, ObservationSetup, PdeProblem
from .geometry import GeometryModel, RegionMasks
from .gfield import FieldPrior, SpectralField
from .grid import Grid


# ---------------------------------------------------------------------------
# geometric priors


@dataclass(frozen=True)
class Interval:
    """Uniform on ``[lo, hi]`` for one parameter."""

    idx: int
    lo: float
    hi: float

    @property
    def indices(self) -> tuple:
        return (self.idx,)

    def volume(self) -> float:
        return self.hi - self.lo

    def contains(self, a) -> bool:
        return bool(self.lo <= a[self.idx] <= self.hi)

    def log_density(self, a) -> float:
        return -math.log(self.volume())

    def grad_log_density(self, a, out) -> None:
        pass

    def sample(self, rng, out) -> None:
        out[self.idx] = rng.uniform(self.lo, self.hi)

    def bounds(self):
        return [(self.idx, self.lo, self.hi)]


@dataclass(frozen=True)
class OrderedSimplex:
    """Uniform on ``{0 <= a[i0] <= a[i1] <= ... <= 1}``."""

    idx: tuple

    @property
    def indices(self) -> tuple:
        return tuple(self.idx)

    def volume(self) -> float:
        return 1.0 / math.factorial(len(self.idx))

    def contains(self, a) -> bool:
        v = np.asarray(a)[list(self.idx)]
        return bool(v[0] >= 0 and v[-1] <= 1 and np.all(np.diff(v) >= 0))

    def log_density(self, a) -> float:
        return -math.log(self.volume())

    def grad_log_density(self, a, out) -> None:
        pass

    def sample(self, rng, out) -> None:
        out[list(self.idx)] = np.sort(rng.uniform(0.0, 1.0, len(self.idx)))

    def bounds(self):
        return [(i, 0.0, 1.0) for i in self.idx]


@dataclass(frozen=True)
class Sloped:
    """Linear density ``(1 + slope (x - mid)) / (hi - lo)`` on ``[lo, hi]``.

    Continuous and positive on the closed interval when ``|slope| (hi - lo) < 2``.
    """

    idx: int
    lo: float
    hi: float
    slope: float

    def __post_init__(self):
        if abs(self.slope) * (self.hi - self.lo) >= 2:
            raise ValueError("slope makes the density vanish inside the interval")

    @property
    def indices(self) -> tuple:
        return (self.idx,)

    def volume(self) -> float:
        return self.hi - self.lo

    def contains(self, a) -> bool:
        return bool(self.lo <= a[self.idx] <= self.hi)

    def _density(self, x) -> float:
        mid = 0.5 * (self.lo + self.hi)
        return (1 + self.slope * (x - mid)) / (self.hi - self.lo)

    def log_density(self, a) -> float:
        return math.log(self._density(a[self.idx]))

    def grad_log_density(self, a, out) -> None:
        mid = 0.5 * (self.lo + self.hi)
        out[self.idx] += self.slope / (1 + self.slope * (a[self.idx] - mid))

    def sample(self, rng, out) -> None:
        # inverse CDF of the linear density
        w = self.hi - self.lo
        c = self.slope * w / 2
        u = rng.uniform()
        if abs(c) < 1e-14:
            t = u
        else:
            # F(t) = t + c (t^2 - t) on t in [0, 1]
            t = ((c - 1) + math.sqrt((1 - c) ** 2 + 4 * c * u)) / (2 * c)
        out[self.idx] = self.lo + w * t

    def bounds(self):
        return [(self.idx, self.lo, self.hi)]


@dataclass(frozen=True)
class GeometricPrior:
    """Product of independent factors over disjoint parameter subsets."""

    k: int
    factors: tuple

    def __post_init__(self):
        seen = sorted(i for f in self.factors for i in f.indices)
        if seen != list(range(self.k)):
            raise ValueError("factors must cover every geometry parameter exactly once")

    def contains(self, a) -> bool:
        a = np.asarray(a, dtype=float)
        return a.shape == (self.k,) and np.all(np.isfinite(a)) and all(f.contains(a) for f in self.factors)

    def log_density(self, a) -> float:
        """``log rho(a)``; ``-inf`` off the support, continuous extension on its boundary."""
        a = np.asarray(a, dtype=float)
        if not self.contains(a):
            return -math.inf
        return float(sum(f.log_density(a) for f in self.factors))

    def grad_log_density(self, a) -> np.ndarray:
        out = np.zeros(self.k)
        for f in self.factors:
            f.grad_log_density(np.asarray(a, dtype=float), out)
        return out

    def volume(self) -> float:
        return float(np.prod([f.volume() for f in self.factors]))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        out = np.zeros(self.k)
        for f in self.factors:
            f.sample(rng, out)
        return out

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = np.zeros(self.k), np.zeros(self.k)
        for f in self.factors:
            for i, l, h in f.bounds():
                lo[i], hi[i] = l, h
        return lo, hi

    @property
    def widths(self) -> np.ndarray:
        lo, hi = self.box()
        return hi - lo


def default_geometric_prior(model: GeometryModel) -> GeometricPrior:
    if model.tag in ("layer2", "curve2"):
        return GeometricPrior(2, (Interval(0, 0, 1), Interval(1, 0, 1)))
    if model.tag == "fault3":
        return GeometricPrior(5, (OrderedSimplex((0, 1)), OrderedSimplex((2, 3)), Interval(4, -0.3, 0.3)))
    if model.tag == "channel":
        return GeometricPrior(5, (
            Interval(0, 0.0, 1.0),
            Interval(1, math.pi, 4 * math.pi),
            Interval(2, -math.pi / 4, math.pi / 4),
            Interval(3, 0.0, 1.0),
            Interval(4, 0.0, 0.4),
        ))
    if model.tag == "multilayer":
        K, N = model.K, model.N
        cols = tuple(OrderedSimplex(tuple(i * K + j for i in range(N - 1))) for j in range(K))
        return GeometricPrior(model.k, cols)
    raise ValueError(model.tag)


def geometry_K(prior: GeometricPrior, a) -> float:
    """``K(a) = -log rho(a)`` on the closed support, ``+inf`` outside."""
    return -prior.log_density(a)


# ---------------------------------------------------------------------------
# the functional


@dataclass(frozen=True)
class OmValue:
    phi: float
    j: float
    k: float

    @property
    def total(self) -> float:
        if math.isinf(self.phi) or math.isinf(self.j) or math.isinf(self.k):
            return math.inf
        return self.phi + self.j + self.k

    def row(self) -> tuple:
        return (self.phi, self.j, self.k, self.total)


def potential_from_prediction(y_pred, y, gamma: float) -> float:
    r = np.asarray(y_pred) - np.asarray(y)
    return 0.5 * float(r @ r) / gamma**2


def accept_ratio_fields(phi_current: float, phi_proposed: float) -> float:
    """pCN acceptance ``min(1, exp(Phi(u) - Phi(v)))``; the prior ratio cancels."""
    d = phi_current - phi_proposed
    return 1.0 if d >= 0 else math.exp(d)


@dataclass
class Posterior:
    """Posterior over ``(fields, a)`` for one geometric model and data vector.

    ``y=None`` gives the prior itself (``Phi = 0`` with no forward solves).
    """

    model: GeometryModel
    priors: list
    geom_prior: GeometricPrior
    grid: Grid
    problem: PdeProblem = field(default_factory=PdeProblem)
    setup: ObservationSetup = field(default_factory=darcy.default_setup)
    y: np.ndarray | None = None
    n_solves: int = 0

    def __post_init__(self):
        if len(self.priors) != self.model.n_regions:
            raise ValueError(f"{self.model.tag} needs {self.model.n_regions} field priors")
        if self.geom_prior.k != self.model.k:
            raise ValueError("geometric prior dimension does not match the model")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=float)
            if self.setup.gamma <= 0:
                raise ValueError("a data likelihood needs gamma > 0")

    @property
    def gamma(self) -> float:
        return self.setup.gamma

    def construct(self, fields, a, masks: RegionMasks | None = None) -> np.ndarray:
        return darcy.construct(fields, a, self.model, self.grid, masks)[0]

    def state(self, fields, a, masks=None) -> ForwardState:
        self.n_solves += 1
        return darcy.forward_state(fields, a, self.model, self.problem, self.setup, self.grid, masks)

    def phi_of(self, state: ForwardState) -> float:
        if self.y is None:
            return 0.0
        return potential_from_prediction(state.y_pred, self.y, self.gamma)

    def potential(self, fields, a) -> float:
        if self.y is None:
            return 0.0
        return self.phi_of(self.state(fields, a))

    def J(self, fields) -> float:
        return float(sum(gfield.cm_norm(p, f) for p, f in zip(self.priors, fields)))

    def K(self, a) -> float:
        return geometry_K(self.geom_prior, a)

    def om(self, fields, a) -> OmValue:
        return OmValue(self.potential(fields, a), self.J(fields), self.K(a))

    def total(self, fields, a) -> float:
        """``I(u, a)``, skipping the forward solve when ``a`` is off the support."""
        k = self.K(a)
        if math.isinf(k):
            return math.inf
        return self.potential(fields, a) + self.J(fields) + k

    def grad_phi_fields(self, fields, a, state: ForwardState | None = None) -> list[np.ndarray]:
        if self.y is None:
            return [np.zeros_like(f.coeffs) for f in fields]
        if state is None:
            state = self.state(fields, a)
        return darcy.grad_phi_fields(state, fields, self.y, self.setup, self.problem)

    def gradient(self, fields, a) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradient of ``I`` in coefficient space and in ``a``.

        The discrete ``Phi`` depends on ``a`` only through the nodal masks, so
        away from mask changes its geometry derivative is zero and only ``K``
        contributes there.
        """
        g_phi = self.grad_phi_fields(fields, a)
        g_u = [gp + gfield.cm_gradient(p, f) for gp, p, f in zip(g_phi, self.priors, fields)]
        return g_u, -self.geom_prior.grad_log_density(a)

    def with_data(self, y) -> "Posterior":
        return Posterior(self.model, self.priors, self.geom_prior, self.grid, self.problem, self.setup, y)


def potential(fields, a, y, model, problem, setup, grid) -> float:
    """``Phi(u, a; y) = |G(u, a) - y|^2_Gamma / 2``."""
    y_pred = darcy.forward(fields, a, model, problem, setup, grid)
    return potential_from_prediction(y_pred, y, setup.gamma)


def om_functional(post: Posterior, fields, a) -> OmValue:
    return post.om(fields, a)


def sample_prior(post: Posterior, rng: np.random.Generator) -> tuple[list[SpectralField], np.ndarray]:
    fields = [gfield.sample(p, rng) for p in post.priors]
    return fields, post.geom_prior.sample(rng)


def normalizer_estimate(post: Posterior, n: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo ``Z(y) = E_prior[exp(-Phi)]`` with its standard error."""
    w = np.empty(n)
    for t in range(n):
        fields, a = sample_prior(post, rng)
        w[t] = math.exp(-post.potential(fields, a))
    return float(w.mean()), float(w.std(ddof=1) / math.sqrt(n))


def field_priors(specs, truncation: int) -> list[FieldPrior]:
    return [FieldPrior(float(m), float(al), float(s), truncation) for m, al, s in specs]
