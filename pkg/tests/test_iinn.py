import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import fd_input_derivatives, mean_abs2, pthog_scalar, quadwell_scalar
from qdrop import neural
from qdrop.grid import make_grid
from qdrop.iinn import (GaussianSum, IinnConfig, LinearModeSeed, TrivialSolutionError,
                        build_seed, fit_iinn, loss_fit, loss_stationary_complex,
                        loss_stationary_real, make_stationary_loss, network_field, sample_points,
                        seed_on_grid, train_iinn)
from qdrop.neural import MlpParams, glorot_normal_init, n_params
from qdrop.potentials import PtHog, QuadWell, Zero
from qdrop.spectral import StationaryProblem

GRID = make_grid([-12, 12, -12, 12], 8, 8)


def _net(n_out, seed=0, hidden=(12, 12)):
    p = glorot_normal_init((2, *hidden, n_out), seed)
    rng = np.random.default_rng(seed)
    return p.with_theta(p.theta + 0.05 * rng.normal(size=p.theta.size))


def _constant_net(values, hidden=(6, 6)):
    """A network whose output is the constant vector ``values``."""
    sizes = (2, *hidden, len(values))
    theta = np.zeros(n_params(sizes))
    theta[-len(values):] = values
    return MlpParams(sizes, theta)


def test_gaussian_seed_values():
    qw = QuadWell(x0=5.0, y0=5.0)
    f = build_seed(GaussianSum((0.46, 0.0, 0.3, 0.0), 0.1), qw)
    x, y = 3.1, -4.2
    expected = (0.46 * math.exp(-0.1 * ((x - 5) ** 2 + (y - 5) ** 2))
                + 0.3 * math.exp(-0.1 * ((x + 5) ** 2 + (y + 5) ** 2)))
    assert f(x, y) == pytest.approx(expected, rel=1e-14)


def test_gaussian_seed_explicit_centers():
    f = build_seed(GaussianSum((1.0,), 0.5, ((1.0, 2.0),)), Zero())
    assert f(1.0, 2.0) == 1.0
    with pytest.raises(ValueError):
        build_seed(GaussianSum((1.0,), 0.5), Zero())
    with pytest.raises(ValueError):
        build_seed(GaussianSum((1.0, 2.0), 0.5, ((0.0, 0.0),)), Zero())


@pytest.mark.parametrize("kw", [dict(amplitudes=(0, 0, 0, 0)), dict(k=0.0)])
def test_gaussian_seed_rejects(kw):
    with pytest.raises(ValueError):
        GaussianSum(**kw)


def test_linear_mode_seed_peak():
    g = make_grid([-8, 8, -8, 8], 32, 32)
    field = seed_on_grid(LinearModeSeed(((0, 1.0),), scale=0.7, grid_n=32), PtHog(), g)
    assert np.max(np.abs(field.values)) == pytest.approx(0.7, rel=1e-12)
    with pytest.raises(ValueError):
        LinearModeSeed(((0, 0.0),))
    with pytest.raises(ValueError):
        build_seed(LinearModeSeed(), PtHog())


@pytest.mark.parametrize("kw", [dict(n_points=0), dict(stage1_iters=0), dict(stage2_iters=0),
                                dict(stage2_lbfgs_iters=-1), dict(stage1_optimizer="lbfgs"),
                                dict(stage2_optimizer="rmsprop"), dict(n_outputs=3)])
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        IinnConfig(**kw)


def test_fit_loss_independent():
    p = _net(2)
    pts = sample_points(GRID, 50, np.random.default_rng(0))
    seed = build_seed(GaussianSum(), QuadWell())
    out = neural.forward(p, pts)
    diff = out[:, 0] + 1j * out[:, 1] - seed(pts[:, 0], pts[:, 1])
    assert loss_fit(p, seed, pts) == pytest.approx(mean_abs2(diff), rel=1e-13)


def _residual_fd(p, problem, pts):
    """Stationary residual with Laplacians from finite differences."""
    f = lambda z: neural.forward(p, z)
    _, sec = fd_input_derivatives(f, pts, h=1e-3)
    lap = sec.sum(-1)
    v = f(pts)
    U = np.array([complex(problem_U(problem, x, y)) for x, y in pts])
    phi = v[:, 0] + 1j * v[:, 1] if v.shape[1] == 2 else v[:, 0].astype(complex)
    lphi = lap[:, 0] + 1j * lap[:, 1] if v.shape[1] == 2 else lap[:, 0].astype(complex)
    s = np.abs(phi) ** 2
    G = np.where(s > 0, 2 * s * np.log(2 * np.where(s > 0, s, 1)), 0)
    return -0.5 * lphi + (G + U - problem.mu) * phi, np.abs(phi)


def problem_U(problem, x, y):
    if isinstance(problem.potential, PtHog):
        return pthog_scalar(x, y)
    return quadwell_scalar(x, y, x0=problem.potential.x0, y0=problem.potential.y0)


@pytest.mark.parametrize("n_out,pot,mu", [(1, QuadWell(), -0.5), (2, QuadWell(), -0.3),
                                          (2, PtHog(), 2.0)])
def test_stationary_loss_independent(n_out, pot, mu):
    p = _net(n_out, seed=3)
    problem = StationaryProblem(mu, pot, GRID)
    pts = sample_points(make_grid([-3, 3, -3, 3], 2, 2), 40, np.random.default_rng(1))
    res, amp = _residual_fd(p, problem, pts)
    expected = mean_abs2(res) / amp.max()
    got = (loss_stationary_real if n_out == 1 else loss_stationary_complex)(p, problem, pts)
    assert got == pytest.approx(expected, rel=1e-6)


def _rotate_output(p, angle):
    """Multiply the network's complex output p + iq by exp(i angle)."""
    th = p.theta.copy()
    sizes = p.layer_sizes
    n_last = sizes[-2] * 2 + 2
    W = th[-n_last:-2].reshape(2, sizes[-2])
    b = th[-2:]
    R = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    th[-n_last:-2] = (R @ W).ravel()
    th[-2:] = R @ b
    return p.with_theta(th)


@settings(max_examples=30, deadline=None)
@given(st.floats(-math.pi, math.pi))
def test_complex_loss_phase_invariant(angle):
    p = _net(2, seed=4)
    problem = StationaryProblem(2.0, PtHog(), GRID)
    pts = sample_points(make_grid([-4, 4, -4, 4], 2, 2), 30, np.random.default_rng(2))
    a = loss_stationary_complex(p, problem, pts)
    b = loss_stationary_complex(_rotate_output(p, angle), problem, pts)
    assert b == pytest.approx(a, rel=1e-10)


def test_constant_solution_zero_residual():
    pts = sample_points(GRID, 25, np.random.default_rng(3))
    problem = StationaryProblem(0.0, Zero(), GRID)
    # (1/sqrt 2)^2 is 1/2 only up to rounding, so ln(2s) ~ 1e-16
    assert loss_stationary_real(_constant_net([1 / math.sqrt(2)]), problem, pts) < 1e-30
    c = np.exp(0.4j) / math.sqrt(2)
    assert loss_stationary_complex(_constant_net([c.real, c.imag]), problem, pts) < 1e-30


def test_zero_network_is_trivial():
    pts = sample_points(GRID, 5, np.random.default_rng(0))
    with pytest.raises(TrivialSolutionError):
        loss_stationary_real(_constant_net([0.0]), StationaryProblem(0.0, Zero(), GRID), pts)


def test_loss_shape_errors():
    pts = sample_points(GRID, 5, np.random.default_rng(0))
    pb = StationaryProblem(1.0, PtHog(), GRID)
    with pytest.raises(ValueError):
        make_stationary_loss((2, 4, 1), pb, pts)
    with pytest.raises(ValueError):
        loss_stationary_real(_net(2), pb, pts)
    with pytest.raises(ValueError):
        loss_stationary_complex(_net(1), pb, pts)
    with pytest.raises(ValueError):
        make_stationary_loss((2, 4, 1), pb, np.zeros((0, 2)))


def test_sample_points_in_box():
    g = make_grid([-2, 1, 3, 4], 2, 2)
    pts = sample_points(g, 1000, np.random.default_rng(0))
    assert np.all(g.contains(pts[:, 0], pts[:, 1]))


SMALL = dict(n_points=200, stage1_iters=60, stage2_iters=20, hidden=(10, 10))


def test_fit_output_width_follows_problem():
    pts = sample_points(GRID, 50, np.random.default_rng(0))
    qw = StationaryProblem(-0.5, QuadWell(), GRID)
    seed = build_seed(GaussianSum(), QuadWell())(pts[:, 0], pts[:, 1])
    p, summary, _ = fit_iinn(pts, seed, qw, IinnConfig(**SMALL))
    assert p.n_outputs == 1 and summary["layer_sizes"][-1] == 1
    pt = StationaryProblem(2.0, PtHog(), make_grid([-8, 8, -8, 8], 8, 8))
    p, _, _ = fit_iinn(pts / 1.5, np.exp(-np.sum(pts ** 2, 1) / 20), pt, IinnConfig(**SMALL))
    assert p.n_outputs == 2


def test_fit_rejects_bad_inputs():
    pts = sample_points(GRID, 10, np.random.default_rng(0))
    pb = StationaryProblem(-0.5, QuadWell(), GRID)
    with pytest.raises(TrivialSolutionError):
        fit_iinn(pts, np.zeros(10), pb, IinnConfig(**SMALL))
    with pytest.raises(ValueError):
        fit_iinn(pts, np.ones(9), pb, IinnConfig(**SMALL))
    bad = np.ones(10)
    bad[2] = np.nan
    with pytest.raises(ValueError):
        fit_iinn(pts, bad, pb, IinnConfig(**SMALL))


@pytest.mark.parametrize("opt", ["adam", "lbfgs"])
def test_train_reduces_loss_and_is_deterministic(opt):
    problem = StationaryProblem(-0.5, QuadWell(x0=5.0, y0=5.0), GRID)
    cfg = IinnConfig(**SMALL, stage2_optimizer=opt, rng_seed=11)
    p1, r1 = train_iinn(GaussianSum(), problem, cfg)
    p2, r2 = train_iinn(GaussianSum(), problem, cfg)
    assert np.array_equal(p1.theta, p2.theta)
    stage1 = r1["trace"].losses("stage1")
    assert stage1[-1] < stage1[0]
    assert r1["stage2_final_loss"] <= r1["stage2_initial_loss"]
    assert r1["iterations"]["stage2"] <= 20
    assert not np.array_equal(p1.theta, train_iinn(GaussianSum(), problem,
                                                   IinnConfig(**SMALL, rng_seed=12))[0].theta)


def test_train_report_against_oracle():
    problem = StationaryProblem(-0.5, QuadWell(), GRID)
    seed = GaussianSum()
    oracle = seed_on_grid(seed, QuadWell(), GRID)
    _, rep = train_iinn(seed, problem, IinnConfig(**SMALL, stage2_lbfgs_iters=5), oracle=oracle)
    for k in ("rel_l2", "rel_l2_phase_aligned", "rel_l2_p", "wall_clock_s"):
        assert np.isfinite(rep[k])
    assert "rel_l2_q" not in rep
    assert rep["lbfgs_status"] in ("max_iter", "converged", "line_search_failed")
    assert len(rep["trace"].losses("stage2-lbfgs")) >= 1


def test_network_field_complex():
    g = make_grid([-1, 1, -1, 1], 3, 4)
    p = _constant_net([0.3, -0.4])
    f = network_field(p, g)
    assert f.values.shape == (3, 4)
    assert np.all(f.values == 0.3 - 0.4j)
