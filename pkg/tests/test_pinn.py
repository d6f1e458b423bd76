import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import fd_input_derivatives, mean_abs2, pthog_scalar
from qdrop import neural
from qdrop.grid import ComplexField, SpaceTimeDomain, make_grid
from qdrop.neural import MlpParams, glorot_normal_init, n_params
from qdrop.pinn import (PinnConfig, SampleSets, fit_pinn, initial_targets, loss_total,
                        modulus_volume, predict_field, residual_f, sample_boundary,
                        sample_training_sets, series_errors, train_pinn)
from qdrop.potentials import PtHog, QuadWell, Zero
from qdrop.spectral import FieldSeries

GRID = make_grid([-8, 8, -8, 8], 9, 9)
DOMAIN = SpaceTimeDomain(GRID, 1.5)


def _net(seed=0, hidden=(10, 10)):
    p = glorot_normal_init((3, *hidden, 2), seed)
    rng = np.random.default_rng(seed)
    return p.with_theta(p.theta + 0.05 * rng.normal(size=p.theta.size))


def _gauss(x, y):
    return 0.4 * np.exp(-(x ** 2 + y ** 2) / 8) * np.exp(0.2j * x)


def test_config_rejects():
    with pytest.raises(ValueError):
        PinnConfig(n_boundary=0)
    with pytest.raises(ValueError):
        PinnConfig(adam_steps=-1)


def test_boundary_points_on_edges():
    g = make_grid([-2, 6, -1, 1], 2, 2)
    pts = sample_boundary(g, 3.0, 4000, np.random.default_rng(0))
    x, y, t = pts.T
    on_x = (x == -2) | (x == 6)
    on_y = (y == -1) | (y == 1)
    assert np.all(on_x | on_y)
    assert np.all((t >= 0) & (t <= 3))
    assert np.all(g.contains(x, y))
    # horizontal edges are 4x longer than vertical ones
    frac = np.mean(on_y & ~on_x)
    assert abs(frac - 0.8) < 0.03


def test_training_sets():
    cfg = PinnConfig(n_collocation=300, n_boundary=40, n_initial=50)
    sets = sample_training_sets(DOMAIN, cfg, _gauss, np.random.default_rng(1))
    assert sets.collocation.shape == (300, 3)
    assert sets.boundary.shape == (40, 3)
    assert sets.initial.shape == (50, 2)
    c = sets.collocation
    assert np.all(GRID.contains(c[:, 0], c[:, 1])) and np.all((c[:, 2] >= 0) & (c[:, 2] <= 1.5))
    v = _gauss(sets.initial[:, 0], sets.initial[:, 1])
    assert np.array_equal(sets.initial_values, np.column_stack([v.real, v.imag]))
    # same seed, same sets
    again = sample_training_sets(DOMAIN, cfg, _gauss, np.random.default_rng(1))
    assert np.array_equal(again.collocation, sets.collocation)


def test_initial_targets_from_field_exact_at_nodes():
    X, Y = GRID.mesh()
    f = ComplexField(GRID, _gauss(X, Y))
    pts = GRID.points()[::7]
    vals = initial_targets(f, pts)
    ref = _gauss(pts[:, 0], pts[:, 1])
    assert np.allclose(vals, np.column_stack([ref.real, ref.imag]), rtol=0, atol=1e-15)


def test_sample_sets_validation():
    z3, z2 = np.zeros((4, 3)), np.zeros((4, 2))
    with pytest.raises(ValueError):
        SampleSets(z2, z3, z2, z2)
    with pytest.raises(ValueError):
        SampleSets(z3, z3, z2, np.zeros((3, 2)))
    bad = z2.copy()
    bad[0, 0] = np.inf
    with pytest.raises(ValueError):
        SampleSets(z3, z3, z2, bad)


def _residual_fd(p, pts):
    f = lambda z: neural.forward(p, z)
    grad, sec = fd_input_derivatives(f, pts, h=1e-3)
    v = f(pts)
    P, Q = v[:, 0], v[:, 1]
    lap = sec[..., 0] + sec[..., 1]
    U = np.array([pthog_scalar(x, y) for x, y, _ in pts])
    s = P * P + Q * Q
    G = 2 * s * np.log(2 * s)
    Fp = -grad[:, 1, 2] + 0.5 * lap[:, 0] - G * P - U.real * P + U.imag * Q
    Fq = grad[:, 0, 2] + 0.5 * lap[:, 1] - G * Q - U.real * Q - U.imag * P
    return Fp, Fq


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_residual_vs_finite_differences(seed):
    p = _net(seed)
    pts = np.random.default_rng(seed).uniform([-3, -3, 0], [3, 3, 2], size=(20, 3))
    Fp, Fq = residual_f(p, PtHog(), pts)
    ep, eq = _residual_fd(p, pts)
    scale = max(np.max(np.abs(ep)), np.max(np.abs(eq)))
    assert np.max(np.abs(Fp - ep)) / scale < 1e-5
    assert np.max(np.abs(Fq - eq)) / scale < 1e-5


def _constant_net(p0, q0, hidden=(6, 6)):
    sizes = (3, *hidden, 2)
    theta = np.zeros(n_params(sizes))
    theta[-2:] = (p0, q0)
    return MlpParams(sizes, theta)


def test_constant_solution_zero_residual():
    c = np.exp(1.1j) / math.sqrt(2)
    p = _constant_net(c.real, c.imag)
    pts = np.random.default_rng(0).uniform([-5, -5, 0], [5, 5, 3], size=(30, 3))
    Fp, Fq = residual_f(p, Zero(), pts)
    assert np.max(np.abs(Fp)) < 1e-15 and np.max(np.abs(Fq)) < 1e-15
    fp, fq = residual_f(p, Zero(), pts[0])
    assert np.ndim(fp) == 0


def test_loss_decomposition_exact():
    cfg = PinnConfig(n_collocation=200, n_boundary=30, n_initial=40)
    sets = sample_training_sets(DOMAIN, cfg, _gauss, np.random.default_rng(2))
    p = _net(3)
    total, parts = loss_total(p, sets, QuadWell())
    assert total == parts["mse_f"] + parts["mse_i"] + parts["mse_b"]
    # each part from plain forward passes
    Fp, Fq = residual_f(p, QuadWell(), sets.collocation)
    assert parts["mse_f"] == pytest.approx(mean_abs2(Fp + 1j * Fq), rel=1e-12)
    out_i = neural.forward(p, np.column_stack([sets.initial, np.zeros(40)]))
    d = out_i - sets.initial_values
    assert parts["mse_i"] == pytest.approx(mean_abs2(d[:, 0] + 1j * d[:, 1]), rel=1e-12)
    out_b = neural.forward(p, sets.boundary)
    assert parts["mse_b"] == pytest.approx(mean_abs2(out_b[:, 0] + 1j * out_b[:, 1]), rel=1e-12)


def test_wrong_network_shape():
    with pytest.raises(ValueError):
        residual_f(glorot_normal_init((2, 4, 2), 0), Zero(), np.zeros((1, 3)))
    with pytest.raises(ValueError):
        predict_field(glorot_normal_init((3, 4, 1), 0), GRID, [0.0])


def test_predict_field_and_volume():
    p = _net(5)
    ser = predict_field(p, GRID, [0.0, 0.5, 1.5])
    assert ser.times == [0.0, 0.5, 1.5]
    assert ser.meta["isosurface_levels"] == [0.1, 0.5, 0.9]
    out = neural.forward(p, np.array([GRID.point(2, 3) + (0.5,)]))
    assert ser.fields[1].values[2, 3] == pytest.approx(out[0, 0] + 1j * out[0, 1], rel=1e-14)
    vol = modulus_volume(ser)
    assert vol.shape == (3, 9, 9) and np.all(vol >= 0)


def test_series_errors():
    X, Y = GRID.mesh()
    a = FieldSeries([0.0, 1.0], [ComplexField(GRID, _gauss(X, Y)), ComplexField(GRID, 2 * _gauss(X, Y))])
    e = series_errors(a, a)
    assert e["rel_l2_psi"] == 0 and e["per_time_rel_l2_psi"] == [0.0, 0.0]
    b = FieldSeries(a.times, [ComplexField(GRID, 1.1 * f.values) for f in a.fields])
    e = series_errors(b, a)
    assert e["rel_l2_psi"] == pytest.approx(0.1, rel=1e-12)
    assert e["rel_l2_p"] == pytest.approx(0.1, rel=1e-12)


SMALL = dict(n_collocation=200, n_boundary=20, n_initial=50, adam_steps=30, lbfgs_steps=10,
             hidden=(10, 10), rng_seed=4)


def test_train_pinn_small_and_deterministic():
    cfg = PinnConfig(**SMALL)
    X, Y = GRID.mesh()
    ref = FieldSeries([0.0, 1.5], [ComplexField(GRID, _gauss(X, Y))] * 2)
    p1, r1 = train_pinn(_gauss, QuadWell(), DOMAIN, cfg, reference=ref)
    p2, r2 = train_pinn(_gauss, QuadWell(), DOMAIN, cfg, reference=ref)
    assert np.array_equal(p1.theta, p2.theta)
    losses = r1["trace"].losses()
    assert r1["final_loss"] < losses[0]
    assert np.all(np.diff(r1["trace"].losses("lbfgs")) <= 0)
    assert r1["iterations"]["adam"] == 30 and r1["iterations"]["lbfgs"] <= 10
    assert r1["eval_times"] == [0.0, 1.5]
    assert len(r1["per_time_rel_l2_psi"]) == 2


def test_fit_pinn_warm_start():
    cfg = PinnConfig(**{**SMALL, "adam_steps": 0, "lbfgs_steps": 0})
    sets = sample_training_sets(DOMAIN, cfg, _gauss, np.random.default_rng(0))
    p0 = _net(7)
    p, summary, trace = fit_pinn(sets, Zero(), cfg, init_params=p0)
    assert np.array_equal(p.theta, p0.theta)
    assert len(trace) == 0 and summary["lbfgs_status"] is None
    with pytest.raises(ValueError):
        fit_pinn(sets, Zero(), cfg, init_params=glorot_normal_init((2, 3, 2), 0))
