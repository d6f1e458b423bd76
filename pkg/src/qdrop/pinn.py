"""Physics-informed network for the space-time initial-boundary value problem.

The network maps ``(x, y, t) -> (p, q)`` with ``psi = p + i q``. The loss is
``MSE_F + MSE_I + MSE_B`` over interior collocation points, initial points
(targets from the stationary state) and boundary points (zero targets).
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
import torch

from . import neural
from .grid import ComplexField, Grid2D, SpaceTimeDomain, relative_l2
from .neural import MlpParams, as_tensor, glorot_normal_init
from .optim import Trace, adam_minimize, lbfgs_minimize
from .potentials import PotentialSpec, bilinear, eval_potential
from .spectral import FieldSeries

log = logging.getLogger(__name__)

S_FLOOR = 1e-300
ISO_LEVELS = (0.1, 0.5, 0.9)


@dataclass
class PinnConfig:
    n_collocation: int = 20000
    n_boundary: int = 150
    n_initial: int = 1000
    adam_steps: int = 40000
    lbfgs_steps: int = 10000
    lr: float = 1e-3
    hidden: tuple[int, ...] = (100, 100, 100, 100)
    rng_seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if min(self.n_collocation, self.n_boundary, self.n_initial) < 1:
            raise ValueError("sample counts must be positive")
        if self.adam_steps < 0 or self.lbfgs_steps < 0:
            raise ValueError("step counts must be >= 0")


@dataclass
class SampleSets:
    collocation: np.ndarray   # (N_f, 3) interior (x, y, t)
    boundary: np.ndarray      # (N_B, 3) on the edges of the box
    initial: np.ndarray       # (N_I, 2) at t = 0
    initial_values: np.ndarray  # (N_I, 2) target (p0, q0)

    def __post_init__(self):
        if self.collocation.shape[1] != 3 or self.boundary.shape[1] != 3:
            raise ValueError("collocation and boundary points need (x, y, t)")
        if self.initial.shape != self.initial_values.shape or self.initial.shape[1] != 2:
            raise ValueError("initial points and targets must both be (N_I, 2)")
        if not np.all(np.isfinite(self.initial_values)):
            raise ValueError("initial targets must be finite")


def sample_boundary(grid: Grid2D, t_max: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Points on the four edges, each edge chosen with probability proportional to its length."""
    lx = grid.x_max - grid.x_min
    ly = grid.y_max - grid.y_min
    edge = rng.choice(4, size=n, p=np.array([lx, lx, ly, ly]) / (2 * (lx + ly)))
    u = rng.uniform(0.0, 1.0, n)
    t = rng.uniform(0.0, t_max, n)
    x = np.where(edge < 2, grid.x_min + u * lx, np.where(edge == 2, grid.x_min, grid.x_max))
    y = np.where(edge < 2, np.where(edge == 0, grid.y_min, grid.y_max), grid.y_min + u * ly)
    return np.column_stack([x, y, t])


def sample_training_sets(domain: SpaceTimeDomain, cfg: PinnConfig,
                         initial: ComplexField | Callable, rng=None) -> SampleSets:
    """Draw i.i.d. uniform collocation, boundary and initial points.

    ``initial`` is either a grid field (bilinearly interpolated) or a callable
    ``phi(x, y) -> complex``.
    """
    rng = np.random.default_rng(cfg.rng_seed) if rng is None else rng
    g = domain.grid
    xf = np.column_stack([rng.uniform(g.x_min, g.x_max, cfg.n_collocation),
                          rng.uniform(g.y_min, g.y_max, cfg.n_collocation),
                          rng.uniform(0.0, domain.t_max, cfg.n_collocation)])
    xb = sample_boundary(g, domain.t_max, cfg.n_boundary, rng)
    xi = np.column_stack([rng.uniform(g.x_min, g.x_max, cfg.n_initial),
                          rng.uniform(g.y_min, g.y_max, cfg.n_initial)])
    return SampleSets(xf, xb, xi, initial_targets(initial, xi))


def initial_targets(initial, points: np.ndarray) -> np.ndarray:
    if isinstance(initial, ComplexField):
        vals = bilinear(initial, points[:, 0], points[:, 1])
    else:
        vals = np.asarray(initial(points[:, 0], points[:, 1]), dtype=complex)
    return np.column_stack([vals.real, vals.imag])


def _lhy_t(s):
    safe = torch.where(s >= S_FLOOR, s, torch.ones_like(s))
    return torch.where(s >= S_FLOOR, 2.0 * safe * torch.log(2.0 * safe), torch.zeros_like(s))


def residual_terms(theta, layer_sizes, x, U_re, U_im):
    """``(F_p, F_q)`` at space-time points ``x`` (torch)."""
    v, d1, lap = neural.torch_jet(theta, layer_sizes, x, second="lap")
    p, q = v[:, 0], v[:, 1]
    p_t, q_t = d1[2, :, 0], d1[2, :, 1]
    s = p * p + q * q
    g = _lhy_t(s)
    Fp = -q_t + 0.5 * lap[:, 0] - g * p - U_re * p + U_im * q
    Fq = p_t + 0.5 * lap[:, 1] - g * q - U_re * q - U_im * p
    return Fp, Fq


def residual_f(params: MlpParams, spec: PotentialSpec, points) -> tuple[np.ndarray, np.ndarray]:
    """Residual of the evolution equation at ``(x, y, t)`` point(s)."""
    _check_net(params)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    U = eval_potential(spec, pts[:, 0], pts[:, 1])
    with torch.no_grad():
        Fp, Fq = residual_terms(as_tensor(params.theta), params.layer_sizes, as_tensor(pts),
                                as_tensor(U.real), as_tensor(U.imag))
    Fp, Fq = Fp.numpy(), Fq.numpy()
    if np.asarray(points).ndim == 1:
        return Fp[0], Fq[0]
    return Fp, Fq


def _check_net(params: MlpParams):
    if params.n_inputs != 3 or params.n_outputs != 2:
        raise ValueError("PINN needs a (x, y, t) -> (p, q) network")


def make_total_loss(layer_sizes, sets: SampleSets, spec: PotentialSpec):
    """Return ``theta -> (total, (mse_f, mse_i, mse_b))`` as torch scalars."""
    U = eval_potential(spec, sets.collocation[:, 0], sets.collocation[:, 1])
    xf = as_tensor(sets.collocation)
    U_re, U_im = as_tensor(U.real), as_tensor(U.imag)
    xi = as_tensor(np.column_stack([sets.initial, np.zeros(len(sets.initial))]))
    yi = as_tensor(sets.initial_values)
    xb = as_tensor(sets.boundary)

    def loss(theta):
        Fp, Fq = residual_terms(theta, layer_sizes, xf, U_re, U_im)
        mse_f = (Fp * Fp + Fq * Fq).mean()
        out_i = neural.torch_forward(theta, layer_sizes, xi)
        mse_i = ((out_i - yi) ** 2).sum(dim=1).mean()
        out_b = neural.torch_forward(theta, layer_sizes, xb)
        mse_b = (out_b ** 2).sum(dim=1).mean()
        return mse_f + mse_i + mse_b, (mse_f, mse_i, mse_b)

    return loss


def loss_total(params: MlpParams, sets: SampleSets, spec: PotentialSpec) -> tuple[float, dict]:
    _check_net(params)
    loss = make_total_loss(params.layer_sizes, sets, spec)
    with torch.no_grad():
        total, (f, i, b) = loss(as_tensor(params.theta))
    return float(total), {"mse_f": float(f), "mse_i": float(i), "mse_b": float(b)}


def predict_field(params: MlpParams, grid: Grid2D, times) -> FieldSeries:
    """Network snapshots on ``grid`` at each time, with isosurface levels in ``meta``."""
    _check_net(params)
    pts = grid.points()
    fields = []
    for t in times:
        out = neural.forward(params, np.column_stack([pts, np.full(len(pts), float(t))]))
        fields.append(ComplexField(grid, (out[:, 0] + 1j * out[:, 1]).reshape(grid.shape)))
    return FieldSeries([float(t) for t in times], fields,
                       meta={"source": "pinn", "isosurface_levels": list(ISO_LEVELS)})


def modulus_volume(series: FieldSeries) -> np.ndarray:
    """``|psi|`` stacked as ``(n_times, nx, ny)``; level sets at ``ISO_LEVELS`` give isosurfaces."""
    return np.abs(series.stack())


def series_errors(pred: FieldSeries, ref: FieldSeries) -> dict:
    """Relative L2 errors of psi, p and q over all snapshots jointly."""
    a, b = pred.stack(), ref.stack()
    return {"rel_l2_psi": relative_l2(a, b),
            "rel_l2_p": relative_l2(a.real, b.real),
            "rel_l2_q": relative_l2(a.imag, b.imag),
            "per_time_rel_l2_psi": [relative_l2(x, y) for x, y in zip(a, b)]}


def fit_pinn(sets: SampleSets, spec: PotentialSpec, cfg: PinnConfig,
             init_params: MlpParams | None = None,
             init_seed: int | None = None) -> tuple[MlpParams, dict, Trace]:
    """Adam then L-BFGS on the total loss over fixed sample sets."""
    sizes = (3, *cfg.hidden, 2)
    if init_params is not None:
        _check_net(init_params)
        params = init_params
    else:
        if init_seed is None:
            init_seed = int(np.random.default_rng(cfg.rng_seed).integers(2**63 - 1))
        params = glorot_normal_init(sizes, init_seed)
    total = make_total_loss(params.layer_sizes, sets, spec)

    def lg(theta):
        return neural.loss_gradient(lambda th: total(th)[0], theta)

    trace = Trace()
    theta = params.theta
    if cfg.adam_steps:
        theta, _ = adam_minimize(lg, theta, cfg.adam_steps, lr=cfg.lr, trace=trace,
                                 log_every=1000)
    status = None
    n_lbfgs = 0
    if cfg.lbfgs_steps:
        res = lbfgs_minimize(lg, theta, cfg.lbfgs_steps, log_every=500)
        theta = res.theta
        trace.extend(res.trace)
        status = res.status
        n_lbfgs = res.iterations
        if res.stalled:
            log.warning("PINN L-BFGS phase stalled in line search")
    params = params.with_theta(theta)
    final, parts = loss_total(params, sets, spec)
    summary = {
        "layer_sizes": list(params.layer_sizes),
        "final_loss": final,
        "final_parts": parts,
        "lbfgs_status": status,
        "stalled": status == "line_search_failed",
        "iterations": {"adam": cfg.adam_steps, "lbfgs": n_lbfgs},
    }
    return params, summary, trace


def train_pinn(initial: ComplexField | Callable, spec: PotentialSpec, domain: SpaceTimeDomain,
               cfg: PinnConfig, reference: FieldSeries | None = None,
               init_params: MlpParams | None = None) -> tuple[MlpParams, dict]:
    """Sample the training sets, then Adam and L-BFGS on the total PINN loss.

    With a ``reference`` series (split-step oracle) the report carries relative
    L2 errors of psi, p and q at the reference times on the reference grid.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.rng_seed)
    sets = sample_training_sets(domain, cfg, initial, rng)
    params, summary, trace = fit_pinn(sets, spec, cfg, init_params,
                                      init_seed=int(rng.integers(2**63 - 1)))
    report = {"config": asdict(cfg), **summary, "wall_clock_s": time.perf_counter() - t0}
    if reference is not None:
        pred = predict_field(params, reference.grid, reference.times)
        report.update(series_errors(pred, reference))
        report["eval_times"] = list(reference.times)
    report["trace"] = trace
    return params, report
