import math
from dataclasses import dataclass, field

import numpy as np
import pytest

from geobayes import darcy, geometry, gfield
from geobayes.gfield import FieldPrior, SpectralField
from geobayes.grid import Grid
from geobayes.io_core import seeded_rng
from geobayes.mcmc import (ChainState, McmcConfig, batch_means_se, dwell_fractions, gibbs_sweep,
                           nearest_minimizer_trace, pcn_propose, run_chain, rwm_geometry)
from geobayes.posterior import GeometricPrior, Interval, default_geometric_prior

from conftest import make_posterior


@dataclass
class ToyTarget:
    """Two fields of three coefficients each; Phi couples one coefficient to a[0]."""

    strength: float = 3.0
    model: object = field(default_factory=geometry.layer2)
    grid: Grid = field(default_factory=lambda: Grid(5))
    priors: list = field(default_factory=lambda: [FieldPrior(0.0, 1.5, math.pi**3, 1)] * 2)
    geom_prior: GeometricPrior = field(default_factory=lambda: GeometricPrior(2, (Interval(0, 0, 1), Interval(1, 0, 1))))

    def potential(self, fields, a):
        c = fields[0].coeffs[1, 0]
        return self.strength * (c - (2 * a[0] - 1)) ** 2


def test_pcn_beta_zero_is_identity():
    prior = FieldPrior(0.0, 2.0, 1.0, 4)
    rng = seeded_rng(0, "tests.pcn0")
    u = gfield.sample(prior, rng)
    assert np.array_equal(pcn_propose(u, prior, 0.0, rng).coeffs, u.coeffs)
    with pytest.raises(ValueError):
        pcn_propose(u, prior, 1.5, rng)


def test_pcn_beta_one_is_prior_draw():
    prior = FieldPrior(0.0, 2.0, 1.0, 4)
    u = SpectralField(0.0, np.full((5, 5), 100.0))
    v = pcn_propose(u, prior, 1.0, seeded_rng(0, "x"))
    assert np.array_equal(v.coeffs, gfield.sample(prior, seeded_rng(0, "x")).coeffs)


def test_rwm_outside_support_rejected():
    prior = default_geometric_prior(geometry.layer2())
    rng = seeded_rng(0, "tests.rwm")
    b, log_rho = rwm_geometry([0.999, 0.5], prior, np.array([10.0, 10.0]), rng)
    if not prior.contains(b):
        assert log_rho == -math.inf
    b, log_rho = rwm_geometry([0.5, 0.5], prior, np.array([1e-6, 1e-6]), rng)
    assert log_rho == 0.0  # uniform prior, Phi-free acceptance is 1 inside S


def test_frozen_sweep_accepts_everything():
    post = make_posterior("layer2", 16)
    rng = seeded_rng(0, "tests.frozen_sweep")
    fields = [gfield.sample(p, rng) for p in post.priors]
    a = np.array([0.41, 0.63])
    state = ChainState(fields, a, post.potential(fields, a))
    new, acc = gibbs_sweep(post, state, McmcConfig(beta=0.0, tau=1e-12), rng)
    assert acc.all()
    assert np.allclose(new.a, a, atol=1e-10)
    assert all(np.array_equal(f.coeffs, g.coeffs) for f, g in zip(new.fields, fields))


@pytest.mark.parametrize("tag", ["layer2", "fault3", "channel"])
def test_sweep_cost(tag):
    post = make_posterior(tag, 16)
    rng = seeded_rng(0, "tests.cost")
    fields = [gfield.sample(p, rng) for p in post.priors]
    a = {"layer2": [0.4, 0.6], "fault3": [0.2, 0.6, 0.3, 0.7, 0.1],
         "channel": [0.5, 6.0, 0.1, 0.5, 0.2]}[tag]
    state = ChainState(fields, np.array(a), post.potential(fields, a))
    before = post.n_solves
    gibbs_sweep(post, state, McmcConfig(tau=1e-9), rng)
    assert post.n_solves - before == 1 + post.model.n_regions


def test_frozen_chain_conditional_mean():
    toy = ToyTarget()
    rng = seeded_rng(0, "tests.frozen")
    fields = [gfield.sample(p, rng) for p in toy.priors]
    a0 = np.array([0.3, 0.6])

    class Frozen(ToyTarget):
        def potential(self, f, a):
            same = np.array_equal(a, a0) and all(np.array_equal(x.coeffs, y.coeffs) for x, y in zip(f, fields))
            return 0.0 if same else math.inf

    out = run_chain(Frozen(), fields, a0, McmcConfig(n_samples=50, burn_in=10, thin=5), rng)
    assert out.accept_geom == 0 and not np.any(out.accept_fields)
    u = darcy.construct(fields, a0, toy.model, toy.grid)[0]
    assert np.allclose(out.conditional_mean, u)


def test_run_chain_rejects_outside_start():
    toy = ToyTarget()
    fields = [gfield.sample(p, seeded_rng(0, "t")) for p in toy.priors]
    with pytest.raises(ValueError):
        run_chain(toy, fields, [1.2, 0.5], McmcConfig(n_samples=10, burn_in=0), seeded_rng(0, "t"))


def test_config_validation():
    for kw in ({"beta": 1.2}, {"tau": 0.0}, {"burn_in": 10, "n_samples": 10}, {"thin": 0}):
        with pytest.raises(ValueError):
            McmcConfig(**{"n_samples": 100, "burn_in": 10, **kw})


def test_detailed_balance_against_quadrature():
    toy = ToyTarget()
    rng = seeded_rng(0, "tests.balance")
    fields = [SpectralField(0.0, np.zeros((2, 2))) for _ in range(2)]
    config = McmcConfig(n_samples=60_000, burn_in=5_000, beta=0.6, tau=0.3, thin=1)
    out = run_chain(toy, fields, [0.5, 0.5], config, rng)
    c = np.array([s[0][0].coeffs[1, 0] for s in out.states[config.burn_in:]])
    a = np.array([s[1][0] for s in out.states[config.burn_in:]])

    # brute-force posterior on a fine (c, a) grid: N(0, 1) prior for c, uniform for a
    cg = np.linspace(-5, 5, 2001)
    ag = np.linspace(0, 1, 801)
    C, A = np.meshgrid(cg, ag, indexing="ij")
    dens = np.exp(-0.5 * C**2 - toy.strength * (C - (2 * A - 1)) ** 2)
    edges = np.linspace(-3, 3, 13)
    pc = np.array([dens[(cg >= lo) & (cg < hi)].sum() for lo, hi in zip(edges[:-1], edges[1:])]) / dens.sum()
    hc = np.histogram(c, edges)[0] / c.size
    edges_a = np.linspace(0, 1, 11)
    pa = np.array([dens[:, (ag >= lo) & (ag < hi)].sum() for lo, hi in zip(edges_a[:-1], edges_a[1:])])
    pa /= pa.sum()
    ha = np.histogram(a, edges_a)[0] / a.size
    assert 0.5 * np.abs(hc - pc).sum() <= 0.05
    assert 0.5 * np.abs(ha - pa).sum() <= 0.05


def test_prior_invariance_small():
    post = make_posterior("layer2", 16, truncation=6, with_data=False)
    rng = seeded_rng(0, "tests.prior_inv")
    fields = [gfield.sample(p, rng) for p in post.priors]
    config = McmcConfig(n_samples=20_000, burn_in=1000, beta=0.5, tau=0.2, thin=1)
    out = run_chain(post, fields, [0.5, 0.5], config, rng)
    assert np.all(out.accept_fields == 1.0)
    kept = out.states[config.burn_in:]
    for i, prior in enumerate(post.priors):
        var = prior.std() ** 2
        for k, l in ((1, 0), (0, 1), (1, 1), (2, 0), (0, 2)):
            x2 = np.array([s[0][i].coeffs[k, l] for s in kept]) ** 2
            assert abs(x2.mean() - var[k, l]) <= 3 * batch_means_se(x2)
    a = np.array([s[1][0] for s in kept])
    assert abs(a.mean() - 0.5) <= 3 * batch_means_se(a)


def test_prior_conditional_mean_surface():
    from geobayes.geometry import region_masks
    post = make_posterior("layer2", 12, truncation=5, with_data=False)
    rng = seeded_rng(1, "tests.cm_surface")
    fields = [gfield.sample(p, rng) for p in post.priors]
    config = McmcConfig(n_samples=10_000, burn_in=1000, beta=0.5, tau=0.2, thin=1)
    out = run_chain(post, fields, [0.5, 0.5], config, rng)
    us = np.array([post.construct(f, a) for f, a in out.states[config.burn_in:]])
    assert np.allclose(us.mean(axis=0), out.conditional_mean)
    # oracle: independent geometry draws, fields at their means
    orng = seeded_rng(2, "tests.cm_surface.oracle")
    means = np.array([0.0] + [p.mean for p in post.priors])
    surface = np.mean([means[region_masks(post.model, post.geom_prior.sample(orng), post.grid).index]
                       for _ in range(20_000)], axis=0)
    se = np.array([[batch_means_se(us[:, i, j]) for j in range(12)] for i in range(12)])
    z = np.abs(out.conditional_mean - surface) / se
    assert np.mean(z <= 3) >= 0.97


def test_nearest_minimizer_examples():
    grid = Grid(8)
    rng = seeded_rng(0, "tests.mn")
    library = rng.standard_normal((4, 8, 8))
    for j in range(4):
        assert nearest_minimizer_trace(library[j], library, grid)[0] == j
    # two entries at L2 distance 1; the state sits 0.1 from the second
    lib = np.stack([np.zeros((8, 8)), np.ones((8, 8))])
    assert nearest_minimizer_trace(np.full((8, 8), 0.9), lib, grid)[0] == 1
    # ties go to the lowest index
    assert nearest_minimizer_trace(np.full((8, 8), 0.5), lib, grid)[0] == 0
    with pytest.raises(ValueError):
        nearest_minimizer_trace(lib[0], np.zeros((0, 8, 8)), grid)


def test_chain_outputs_and_determinism():
    post = make_posterior("layer2", 16, truncation=5)
    rng = seeded_rng(0, "tests.chain_init")
    fields = [gfield.smoothed_sample(p, rng) for p in post.priors]
    a = np.array([0.4, 0.6])
    library = np.stack([post.construct(fields, a), np.zeros((16, 16))])
    config = McmcConfig(n_samples=60, burn_in=20, thin=10)
    seen = []
    o1 = run_chain(post, fields, a, config, seeded_rng(3, "c"), library=library,
                   sink=lambda t, f, b: seen.append(t))
    o2 = run_chain(post, fields, a, config, seeded_rng(3, "c"), library=library)
    assert o1.phi_trace[0] == post.potential(fields, a)
    assert o1.phi_trace.size == 61
    assert o1.phi_trace.tobytes() == o2.phi_trace.tobytes()
    assert np.array_equal(o1.mn_trace, o2.mn_trace) and o1.mn_trace[0] in (0, 1)
    assert seen == [10, 20, 30, 40, 50, 60] and list(o1.state_steps) == seen
    assert 0 <= o1.accept_geom <= 1 and np.all((o1.accept_fields >= 0) & (o1.accept_fields <= 1))
    assert o1.conditional_mean.shape == (16, 16)


def test_batch_means_and_dwell():
    rng = seeded_rng(0, "tests.bm")
    x = rng.standard_normal(10_000)
    assert abs(batch_means_se(x) - 0.01) < 0.004
    with pytest.raises(ValueError):
        batch_means_se(np.ones(10))
    assert np.allclose(dwell_fractions([0, 0, 2, 2, 2], 4), [0.4, 0, 0.6, 0])


@pytest.mark.slow
def test_desk_chain_phi_level_and_dwell():
    from geobayes import experiment
    from geobayes.io_core import resolve_manifest
    m = resolve_manifest({"model": "layer2", "mesh": 32, "map": {"inits": 3}})
    ds = experiment.generate(m, 0)
    results = experiment.run_map(m, ds.y, 0)
    post = experiment.build_posterior(m, ds.y)
    library = np.stack([post.construct(r.fields, r.a) for r in results])
    best = min(results, key=lambda r: r.om.total)
    config = McmcConfig(n_samples=3000, burn_in=600, thin=5)
    out = run_chain(post, best.fields, best.a, config, seeded_rng(0, "tests.desk_chain"), library=library)
    assert np.isclose(out.phi_trace[0], best.om.phi)
    assert abs(out.phi_trace[config.burn_in + 1:].mean() - 12.5) <= 10
    assert dwell_fractions(out.mn_trace, len(results)).max() > 0.3
