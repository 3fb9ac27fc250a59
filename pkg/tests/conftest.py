import pytest

from geobayes import darcy, geometry, posterior
from geobayes.grid import Grid
from geobayes.io_core import DEFAULT_PRIORS, seeded_rng


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running desk-scale experiment")
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")


@pytest.fixture(scope="session")
def grid16():
    return Grid(16)


@pytest.fixture(scope="session")
def grid32():
    return Grid(32)


def make_posterior(tag="layer2", n=16, truncation=None, seed=0, with_data=True, geom_prior=None):
    """Posterior with data from a prior draw on the same grid (test helper)."""
    model = geometry.model_from_tag(tag)
    grid = Grid(n)
    priors = posterior.field_priors(DEFAULT_PRIORS[tag], truncation or n - 1)
    post = posterior.Posterior(model, priors, geom_prior or posterior.default_geometric_prior(model), grid)
    if not with_data:
        return post
    rng = seeded_rng(seed, "tests.truth")
    fields, a = posterior.sample_prior(post, rng)
    y = darcy.forward(fields, a, model, post.problem, post.setup, grid)
    return post.with_data(y + post.gamma * rng.standard_normal(y.size))


@pytest.fixture
def layer2_post():
    return make_posterior("layer2", 16)
