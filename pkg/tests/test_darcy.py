import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geobayes import darcy, geometry, gfield, validate
from geobayes.darcy import ObservationSetup, PdeProblem
from geobayes.gfield import SpectralField
from geobayes.grid import Grid
from geobayes.io_core import DEFAULT_PRIORS, seeded_rng
from geobayes.posterior import default_geometric_prior, field_priors

from conftest import make_posterior


def test_grid_invariants():
    with pytest.raises(ValueError):
        Grid(2)
    g = Grid(64)
    assert g.h * (g.n - 1) == 1.0
    assert np.isclose(g.weights.sum(), 1.0)
    assert g.boundary.sum() == 4 * 63


def test_linear_pressure_is_exact():
    grid = Grid(17)
    sol = darcy.solve(PdeProblem(f=0.0, g="x"), np.ones((17, 17)), grid)
    X, _ = grid.mesh
    assert np.abs(sol.p - X).max() < 1e-13
    assert sol.residual <= 1e-10


def test_two_layer_interface_value():
    rep = validate.interface_check(64)
    assert rep["max_error"] <= 1e-3
    assert np.isclose(rep["exact"], 0.731059, atol=1e-6)


def test_manufactured_solution_second_order():
    assert 3.5 <= validate.manufactured_error_ratio(32, 64) <= 4.5


def test_interface_converges_first_order_or_better():
    # nodal error against the 1D piecewise-linear solution when the jump sits between nodes
    errs = []
    for n in (16, 32, 64):
        grid = Grid(n)
        X, _ = grid.mesh
        k = np.where(X < 0.5, 1.0, np.e)
        ex = np.e / (1 + np.e)
        exact = np.where(X < 0.5, 2 * ex * X, ex + (1 - ex) * (2 * X - 1))
        p = darcy.solve(PdeProblem(f=0.0, g=lambda X, Y: np.where(X < 0.5, 2 * ex * X, ex + (1 - ex) * (2 * X - 1))), k, grid).p
        errs.append(np.abs(p - exact).max())
    assert errs[0] / errs[1] > 1.8 or errs[1] < 1e-12
    assert errs[1] / errs[2] > 1.8 or errs[2] < 1e-12


def test_nonpositive_kappa_rejected():
    grid = Grid(9)
    k = np.ones((9, 9))
    k[4, 4] = 0.0
    with pytest.raises(ValueError):
        darcy.solve(PdeProblem(), k, grid)


def test_system_matrix_symmetric():
    rng = seeded_rng(0, "tests.sym")
    grid = Grid(12)
    A, _ = darcy.assemble(np.exp(rng.standard_normal((12, 12))), grid)
    assert abs(A - A.T).max() < 1e-14


def test_maximum_principle():
    rng = seeded_rng(0, "tests.maxprinciple")
    grid = Grid(24)
    problem = PdeProblem(f=0.0, g="sin(3 * x) + y * y")
    g = problem.nodal_g(grid)[grid.boundary]
    for _ in range(5):
        p = darcy.solve(problem, np.exp(2 * rng.standard_normal((24, 24))), grid).p
        assert p.min() >= g.min() - 1e-12 and p.max() <= g.max() + 1e-12


def test_observation_of_constant_is_exact():
    grid = Grid(33)
    setup = darcy.default_setup()
    assert np.allclose(darcy.observe(np.full((33, 33), 2.5), setup, grid), 2.5, atol=1e-14)


def test_observation_of_linear_at_centre():
    grid = Grid(33)
    setup = ObservationSetup(((0.5, 0.5),), 0.05, 0.01)
    X, _ = grid.mesh
    assert abs(darcy.observe(X, setup, grid)[0] - 0.5) < 1e-10


def test_mollifier_concentrates():
    grid = Grid(129)
    X, Y = grid.mesh
    p = np.sin(2 * X) * np.cos(Y)
    pt = (0.5, 0.5)
    exact = np.sin(1.0) * np.cos(0.5)
    errs = [abs(darcy.observe(p, ObservationSetup((pt,), eps, 0.01), grid)[0] - exact)
            for eps in (0.05, 0.025, 0.0125)]
    assert errs[0] > errs[1] > errs[2]
    # O(eps): halving eps roughly halves the error
    assert errs[1] / errs[2] > 1.5


def test_lattice_points():
    pts = darcy.lattice_points(25)
    assert len(pts) == 25
    assert {round(x * 6) for x, _ in pts} == {1, 2, 3, 4, 5}
    with pytest.raises(ValueError):
        darcy.lattice_points(24)


def test_construct_partition_of_unity():
    grid = Grid(17)
    fields = [SpectralField(0.4, np.zeros((4, 4))) for _ in range(3)]
    u, _ = darcy.construct(fields, [0.2, 0.6, 0.3, 0.7, 0.1], geometry.fault3(), grid)
    assert np.all(u == 0.4)


def test_construct_layer2():
    grid = Grid(17)
    fields = [SpectralField(1.0, np.zeros((3, 3))), SpectralField(-1.0, np.zeros((3, 3)))]
    u, _ = darcy.construct(fields, [0.5, 0.5], geometry.layer2(), grid)
    _, Y = grid.mesh
    assert np.all(u[Y < 0.5] == 1.0) and np.all(u[Y > 0.5] == -1.0)


def test_construct_count_mismatch():
    with pytest.raises(ValueError):
        darcy.construct([SpectralField(0.0, np.zeros((2, 2)))], [0.5, 0.5], geometry.layer2(), Grid(5))


def test_construct_sup_norm_contraction():
    rng = seeded_rng(0, "tests.contraction")
    grid = Grid(17)
    model = geometry.fault3()
    priors = field_priors(DEFAULT_PRIORS["fault3"], 8)
    gp = default_geometric_prior(model)
    for _ in range(100):
        u = [gfield.sample(p, rng) for p in priors]
        v = [gfield.sample(p, rng) for p in priors]
        a = gp.sample(rng)
        lhs = np.abs(darcy.construct(u, a, model, grid)[0] - darcy.construct(v, a, model, grid)[0]).max()
        rhs = max(np.abs(gfield.synthesize(x, grid) - gfield.synthesize(y, grid)).max() for x, y in zip(u, v))
        assert lhs <= rhs + 1e-12


def test_forward_with_zero_fields_observes_linear_pressure():
    grid = Grid(17)
    problem = PdeProblem(f=0.0, g="x")
    setup = darcy.default_setup()
    fields = [SpectralField(0.0, np.zeros((4, 4))) for _ in range(2)]
    y = darcy.forward(fields, [0.3, 0.6], geometry.layer2(), problem, setup, grid)
    X, _ = grid.mesh
    assert np.allclose(y, darcy.observe(X, setup, grid), atol=1e-13)


def test_forward_deterministic():
    post = make_posterior("channel", 16)
    rng = seeded_rng(0, "tests.det")
    fields = [gfield.sample(p, rng) for p in post.priors]
    a = post.geom_prior.sample(rng)
    y1 = darcy.forward(fields, a, post.model, post.problem, post.setup, post.grid)
    y2 = darcy.forward(fields, a, post.model, post.problem, post.setup, post.grid)
    assert y1.tobytes() == y2.tobytes()


def test_forward_lipschitz_in_fields():
    post = make_posterior("layer2", 16)
    rng = seeded_rng(0, "tests.lipschitz")
    ratios = []
    for _ in range(100):
        a = post.geom_prior.sample(rng)
        u = [validate._ball_fields(post, 2.0, rng) for _ in range(2)]
        du = validate._x_norm(validate._field_diff(u[0], u[1]), post.grid)
        dy = np.linalg.norm(darcy.forward(u[0], a, post.model, post.problem, post.setup, post.grid)
                            - darcy.forward(u[1], a, post.model, post.problem, post.setup, post.grid))
        ratios.append(dy / du)
    assert np.isfinite(max(ratios)) and max(ratios) < 1e3


def test_forward_continuous_in_geometry():
    post = make_posterior("fault3", 32)
    rng = seeded_rng(1, "tests.geomcont")
    gaps = np.zeros(6)
    for _ in range(10):
        fields = [gfield.smoothed_sample(p, rng) for p in post.priors]
        a = np.array([0.2, 0.6, 0.3, 0.7, 0.0]) + 0.05 * rng.uniform(-1, 1, 5)
        b = 0.1 * rng.uniform(-1, 1, 5)
        y0 = darcy.forward(fields, a, post.model, post.problem, post.setup, post.grid)
        for j, t in enumerate(0.5 ** np.arange(6)):
            y = darcy.forward(fields, a + t * b, post.model, post.problem, post.setup, post.grid)
            gaps[j] += np.linalg.norm(y - y0) / 10
    assert gaps[-1] < gaps[0]
    assert np.mean(np.diff(gaps)) <= 0


def test_bound_check_trivial_case():
    grid = Grid(17)
    fields = [SpectralField(0.0, np.zeros((4, 4))) for _ in range(2)]
    rep = darcy.solution_bound_check(fields, [0.5, 0.5], geometry.layer2(), PdeProblem(f=0.0, g="x"), grid)
    assert rep["holds"] and rep["kappa_min"] == 1.0
    assert np.isclose(rep["lhs"], darcy.grad_norm(grid.mesh[0], grid))


def test_bound_f_term_scales_linearly():
    grid = Grid(17)
    fields = [SpectralField(0.5, np.zeros((4, 4))), SpectralField(-0.5, np.zeros((4, 4)))]
    r1 = darcy.solution_bound_check(fields, [0.5, 0.5], geometry.layer2(), PdeProblem(f="1 + x", g="x"), grid)
    r10 = darcy.solution_bound_check(fields, [0.5, 0.5], geometry.layer2(), PdeProblem(f="10 * (1 + x)", g="x"), grid)
    assert np.isclose(r10["f_term"], 10 * r1["f_term"])
    assert np.isclose(r10["rhs"] - r1["rhs"], 9 * r1["f_term"])


@pytest.mark.parametrize("tag", ["layer2", "fault3", "channel"])
def test_bound_holds_on_prior_draws(tag):
    post = make_posterior(tag, 24, with_data=False)
    rng = seeded_rng(0, f"tests.bound.{tag}")
    problem = PdeProblem(f="5 * sin(pi * x)")
    for _ in range(100):
        fields = [gfield.sample(p, rng) for p in post.priors]
        rep = darcy.solution_bound_check(fields, post.geom_prior.sample(rng), post.model, problem, post.grid)
        assert rep["holds"]


def test_zero_residual_gives_zero_gradient():
    post = make_posterior("layer2", 16, with_data=False)
    rng = seeded_rng(0, "tests.zero")
    fields = [gfield.sample(p, rng) for p in post.priors]
    a = post.geom_prior.sample(rng)
    state = post.state(fields, a)
    g = darcy.grad_phi_fields(state, fields, state.y_pred, post.setup, post.problem)
    assert all(np.all(gi == 0) for gi in g)


@pytest.mark.parametrize("tag", ["layer2", "fault3", "channel"])
def test_adjoint_gradient_matches_finite_differences(tag):
    post = make_posterior(tag, 24, seed=3)
    rng = seeded_rng(0, f"tests.adjoint.{tag}")
    fields = [gfield.sample(p, rng) for p in post.priors]
    a = post.geom_prior.sample(rng)
    assert validate.gradient_check(post, fields, a, 10, rng, step=1e-5) <= 1e-4


def test_gradient_vanishes_outside_region():
    post = make_posterior("layer2", 24)
    rng = seeded_rng(0, "tests.localized")
    fields = [gfield.smoothed_sample(p, rng) for p in post.priors]
    a = np.array([0.3, 0.35])
    state = post.state(fields, a)
    g = darcy.grad_phi_nodal(state, post.y, post.setup, post.problem)
    X, Y = post.grid.mesh
    bump = np.exp(-((X - 0.5) ** 2 + (Y - 0.85) ** 2) / 0.002) * (state.masks.index == 2)
    # field 1 lives below the interface, so a bump in region 2 does not move Phi through it
    g1 = np.where(state.masks.index == 1, g, 0.0)
    assert np.sum(g1 * bump) == 0.0
    assert abs(np.sum(np.where(state.masks.index == 2, g, 0.0) * bump)) > 0


def test_jacobian_matches_finite_differences():
    post = make_posterior("layer2", 16, truncation=5)
    rng = seeded_rng(0, "tests.jac")
    fields = [gfield.smoothed_sample(p, rng) for p in post.priors]
    a = np.array([0.37, 0.52])
    state = post.state(fields, a)
    jac = darcy.jacobian_field(state, 2, 5, post.setup, post.problem)
    h = gfield.smoothed_sample(post.priors[1], rng).coeffs
    t = 1e-5
    plus = list(fields)
    plus[1] = SpectralField(fields[1].mean, fields[1].coeffs + t * h)
    minus = list(fields)
    minus[1] = SpectralField(fields[1].mean, fields[1].coeffs - t * h)
    fd = (post.state(plus, a).y_pred - post.state(minus, a).y_pred) / (2 * t)
    assert np.allclose(np.einsum("jkl,kl->j", jac, h), fd, rtol=1e-5, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(0.01, 1))
def test_expression_specs(c, s):
    grid = Grid(9)
    assert np.allclose(PdeProblem(g=c).nodal_g(grid), c)
    assert np.allclose(PdeProblem(g=f"{s} * x").nodal_g(grid), s * grid.mesh[0])
