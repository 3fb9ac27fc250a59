"""Metropolis-within-Gibbs: random-walk geometry moves, pCN field moves."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import gfield
from .darcy import construct
from .gfield import SpectralField
from .grid import Grid


@dataclass
class McmcConfig:
    n_samples: int = 100_000
    burn_in: int = 20_000
    beta: float = 0.05
    tau: float = 0.02  # fraction of each geometry parameter's support width
    thin: int = 10

    def __post_init__(self):
        betas = np.atleast_1d(self.beta)
        if np.any(betas < 0) or np.any(betas > 1):
            raise ValueError("pCN step beta must lie in [0, 1]")
        if np.any(np.atleast_1d(self.tau) <= 0):
            raise ValueError("random-walk scale tau must be positive")
        if not 0 <= self.burn_in < self.n_samples:
            raise ValueError("burn_in must be smaller than n_samples")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    def betas(self, n_fields: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.beta, dtype=float), (n_fields,))

    def tau_vector(self, widths) -> np.ndarray:
        return np.asarray(self.tau, dtype=float) * np.asarray(widths, dtype=float)

    @classmethod
    def from_manifest(cls, m: dict) -> "McmcConfig":
        c = m["mcmc"]
        return cls(c["samples"], c["burn_in"], c["beta"], c["tau"], c["thin"])


@dataclass
class ChainState:
    fields: list
    a: np.ndarray
    phi: float

    def copy(self) -> "ChainState":
        return ChainState([f.copy() for f in self.fields], self.a.copy(), self.phi)


@dataclass
class ChainOutput:
    phi_trace: np.ndarray  # entry 0 is the initial state, entry n after sweep n
    accept_fields: np.ndarray
    accept_geom: float
    state_steps: np.ndarray  # sweep index of every stored state
    states: list = field(repr=False)  # [(fields, a)] at state_steps
    conditional_mean: np.ndarray | None = field(default=None, repr=False)
    mn_steps: np.ndarray | None = None
    mn_trace: np.ndarray | None = None
    final: ChainState | None = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# proposals


def pcn_propose(u: SpectralField, prior: gfield.FieldPrior, beta: float, rng: np.random.Generator) -> SpectralField:
    """``v = m + sqrt(1 - beta^2) (u - m) + beta xi`` with ``xi`` a prior fluctuation."""
    if not 0 <= beta <= 1:
        raise ValueError("beta must lie in [0, 1]")
    xi = gfield.sample(prior, rng).coeffs
    return SpectralField(u.mean, math.sqrt(1 - beta**2) * u.coeffs + beta * xi)


def rwm_geometry(a, geom_prior, tau, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Gaussian random-walk proposal and ``log rho(a') - log rho(a)``.

    The correction is ``-inf`` when ``a'`` leaves the support.
    """
    a = np.asarray(a, dtype=float)
    b = a + np.asarray(tau) * rng.standard_normal(a.size)
    lp_new = geom_prior.log_density(b)
    if math.isinf(lp_new):
        return b, -math.inf
    return b, lp_new - geom_prior.log_density(a)


def _accept(log_alpha: float, rng) -> bool:
    # one uniform per decision keeps streams aligned across runs
    u = rng.uniform()
    return log_alpha >= 0 or u < math.exp(log_alpha)


def gibbs_sweep(target, state: ChainState, config: McmcConfig, rng: np.random.Generator,
                taus=None, betas=None) -> tuple[ChainState, np.ndarray]:
    """One geometry move then one pCN move per field (ascending region order).

    Returns the new state and a boolean array ``[geometry, field 1, ...]`` of
    acceptances.
    """
    n = len(state.fields)
    if taus is None:
        taus = config.tau_vector(target.geom_prior.widths)
    if betas is None:
        betas = config.betas(n)
    accepted = np.zeros(n + 1, dtype=bool)
    state = ChainState(list(state.fields), state.a, state.phi)

    b, log_rho = rwm_geometry(state.a, target.geom_prior, taus, rng)
    if math.isinf(log_rho):
        rng.uniform()
    else:
        phi_b = target.potential(state.fields, b)
        if _accept(state.phi - phi_b + log_rho, rng):
            state.a, state.phi = b, phi_b
            accepted[0] = True

    for i in range(n):
        v = pcn_propose(state.fields[i], target.priors[i], betas[i], rng)
        trial = list(state.fields)
        trial[i] = v
        phi_v = target.potential(trial, state.a)
        if _accept(state.phi - phi_v, rng):
            state.fields, state.phi = trial, phi_v
            accepted[i + 1] = True
    return state, accepted


# ---------------------------------------------------------------------------
# driver


def nearest_minimizer_trace(states_nodal, library_nodal, grid: Grid) -> np.ndarray:
    """Index of the nearest library entry (L2 on nodal ``u^a``); ties go to the lowest index."""
    library = np.asarray(library_nodal)
    if library.ndim != 3 or library.shape[0] == 0:
        raise ValueError("minimizer library is empty")
    states = np.asarray(states_nodal)
    if states.ndim == 2:
        states = states[None]
    diff = states[:, None] - library[None]
    d2 = np.sum(diff**2 * grid.weights, axis=(2, 3))
    return np.argmin(d2, axis=1)


def run_chain(target, init_fields, init_a, config: McmcConfig, rng: np.random.Generator,
              library=None, store_states: bool = True, sink=None) -> ChainOutput:
    """Run ``config.n_samples`` sweeps from ``(init_fields, init_a)``.

    ``library`` (nodal ``u^a`` of local minimisers, shape ``(L, n, n)``)
    enables the nearest-minimiser trace at every stored step.  ``sink``, if
    given, is called as ``sink(step, fields, a)`` for every stored state.
    """
    a0 = np.asarray(init_a, dtype=float)
    if math.isinf(target.geom_prior.log_density(a0)):
        raise ValueError("initial geometry lies outside the prior support")
    phi0 = target.potential(init_fields, a0)
    state = ChainState([f.copy() for f in init_fields], a0.copy(), phi0)
    n_fields = len(state.fields)
    taus = config.tau_vector(target.geom_prior.widths)
    betas = config.betas(n_fields)

    phi_trace = np.empty(config.n_samples + 1)
    phi_trace[0] = phi0
    n_acc = np.zeros(n_fields + 1)
    steps, states, mn_steps, mn = [], [], [], []
    grid = target.grid
    mean_sum = np.zeros((grid.n, grid.n))
    n_mean = 0
    last_a, last_masks = None, None

    def u_a_now():
        nonlocal last_a, last_masks
        masks = last_masks if last_a is not None and np.array_equal(last_a, state.a) else None
        u, last_masks = construct(state.fields, state.a, target.model, grid, masks)
        last_a = state.a.copy()
        return u

    for t in range(1, config.n_samples + 1):
        state, acc = gibbs_sweep(target, state, config, rng, taus, betas)
        n_acc += acc
        phi_trace[t] = state.phi
        record = t % config.thin == 0
        post_burn = t > config.burn_in
        if post_burn or (record and library is not None):
            u = u_a_now()
            if post_burn:
                mean_sum += u
                n_mean += 1
            if record and library is not None:
                mn_steps.append(t)
                mn.append(int(nearest_minimizer_trace(u, library, grid)[0]))
        if record:
            steps.append(t)
            if store_states:
                states.append(([f.copy() for f in state.fields], state.a.copy()))
            if sink is not None:
                sink(t, state.fields, state.a)

    rates = n_acc / config.n_samples
    return ChainOutput(
        phi_trace=phi_trace,
        accept_fields=rates[1:],
        accept_geom=float(rates[0]),
        state_steps=np.asarray(steps, dtype=int),
        states=states,
        conditional_mean=mean_sum / n_mean if n_mean else None,
        mn_steps=np.asarray(mn_steps, dtype=int) if library is not None else None,
        mn_trace=np.asarray(mn, dtype=int) if library is not None else None,
        final=state,
    )


# ---------------------------------------------------------------------------
# diagnostics


def batch_means_se(x, n_batches: int = 25) -> float:
    """Standard error of the mean of a correlated series by non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    size = x.size // n_batches
    if size < 1:
        raise ValueError("series too short for the requested number of batches")
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def dwell_fractions(mn_trace, n_library: int) -> np.ndarray:
    counts = np.bincount(np.asarray(mn_trace, dtype=int), minlength=n_library)
    return counts / max(1, counts.sum())
