"""Two-stage initial-value iterative neural network (IINN) for stationary states.

Stage 1 fits a network to a seed field at N random points; stage 2 starts
from the stage-1 parameters and minimizes the normalized stationary residual
on the same points.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass
from typing import Callable, Union

import numpy as np
import torch

from . import neural
from .grid import ComplexField, Grid2D, phase_aligned_relative_l2, relative_l2
from .neural import MlpParams, as_tensor, glorot_normal_init
from .optim import Trace, adam_minimize, lbfgs_minimize, sgd_step
from .potentials import QuadWell, bilinear, eval_potential
from .spectral import StationaryProblem, linear_spectrum

log = logging.getLogger(__name__)

S_FLOOR = 1e-300


class TrivialSolutionError(RuntimeError):
    """The network output vanished on every training point."""


@dataclass(frozen=True)
class GaussianSum:
    """``phi0(r) = sum_j a_j exp(-k |r - r_j|^2)``.

    Centers default to the quadruple-well centers of the potential.
    """

    amplitudes: tuple[float, ...] = (0.46, 0.46, 0.46, 0.46)
    k: float = 0.1
    centers: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if not any(a != 0 for a in self.amplitudes):
            raise ValueError("at least one seed amplitude must be nonzero")
        if self.k <= 0:
            raise ValueError("seed width parameter k must be positive")


@dataclass(frozen=True)
class LinearModeSeed:
    """A linear eigenmode (or combination of modes) of ``-lap + U``.

    ``weights`` maps mode index -> complex weight; the combination is rescaled
    so that its peak modulus equals ``scale``.
    """

    weights: tuple[tuple[int, complex], ...] = ((0, 1.0),)
    scale: float = 1.0
    grid_n: int = 128

    def __post_init__(self):
        if not any(w != 0 for _, w in self.weights):
            raise ValueError("at least one linear-mode weight must be nonzero")


SeedSpec = Union[GaussianSum, LinearModeSeed]


def build_seed(seed: SeedSpec, potential, grid: Grid2D | None = None) -> Callable:
    """Return ``phi0(x, y)`` (vectorized, complex) for a seed specification.

    ``grid`` is required for linear-mode seeds: the eigenproblem is solved on a
    ``grid_n x grid_n`` grid over the same rectangle and interpolated.
    """
    if isinstance(seed, GaussianSum):
        if seed.centers is not None:
            centers = seed.centers
        elif isinstance(potential, QuadWell):
            centers = potential.centers()
        else:
            raise ValueError("Gaussian seed needs explicit centers for this potential")
        if len(centers) != len(seed.amplitudes):
            raise ValueError("one amplitude per center required")

        def phi0(x, y):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            out = np.zeros(np.broadcast(x, y).shape)
            for a, (cx, cy) in zip(seed.amplitudes, centers):
                if a != 0:
                    out = out + a * np.exp(-seed.k * ((x - cx) ** 2 + (y - cy) ** 2))
            return out.astype(complex)

        return phi0
    if isinstance(seed, LinearModeSeed):
        if grid is None:
            raise ValueError("linear-mode seed needs a grid")
        field_ = linear_mode_field(seed, potential, grid)
        return lambda x, y: bilinear(field_, x, y)
    raise TypeError(f"unknown seed spec {seed!r}")


def linear_mode_field(seed: LinearModeSeed, potential, grid: Grid2D) -> ComplexField:
    from .grid import make_grid
    g = make_grid(grid.bounds, seed.grid_n, seed.grid_n)
    n_modes = max(i for i, _ in seed.weights) + 1
    modes = linear_spectrum(potential, g, n_modes)
    if len(modes) < n_modes:
        raise IndexError(f"requested mode {n_modes - 1} but only {len(modes)} computed")
    v = sum(complex(w) * modes[i].mode.values for i, w in seed.weights)
    k = np.argmax(np.abs(v))
    v = seed.scale * v / v.ravel()[k]
    return ComplexField(g, v)


def seed_on_grid(seed: SeedSpec, potential, grid: Grid2D) -> ComplexField:
    X, Y = grid.mesh()
    return ComplexField(grid, build_seed(seed, potential, grid)(X, Y))


@dataclass
class IinnConfig:
    n_points: int = 20000
    stage1_iters: int = 20000
    stage2_iters: int = 3000
    stage2_lbfgs_iters: int = 0
    stage1_optimizer: str = "adam"
    stage2_optimizer: str = "adam"
    lr: float = 1e-3
    hidden: tuple[int, ...] = (100, 100, 100, 100)
    n_outputs: int | None = None
    rng_seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        if self.stage1_iters < 1 or self.stage2_iters < 1 or self.stage2_lbfgs_iters < 0:
            raise ValueError("iteration counts must be >= 1")
        if self.stage1_optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown stage-1 optimizer {self.stage1_optimizer!r}")
        if self.stage2_optimizer not in ("adam", "sgd", "lbfgs"):
            raise ValueError(f"unknown stage-2 optimizer {self.stage2_optimizer!r}")
        if self.n_outputs not in (None, 1, 2):
            raise ValueError("n_outputs must be 1, 2 or None")


# -- losses (torch closures) --------------------------------------------------------

def _lhy_t(s: torch.Tensor) -> torch.Tensor:
    safe = torch.where(s >= S_FLOOR, s, torch.ones_like(s))
    return torch.where(s >= S_FLOOR, 2.0 * safe * torch.log(2.0 * safe), torch.zeros_like(s))


def _targets(values: np.ndarray, n_out: int) -> torch.Tensor:
    values = np.asarray(values)
    if n_out == 1:
        return as_tensor(np.real(values).reshape(-1, 1))
    return as_tensor(np.column_stack([np.real(values), np.imag(values)]))


def make_fit_loss(layer_sizes, points, targets) -> Callable[[torch.Tensor], torch.Tensor]:
    """``theta -> mean_i |net(r_i) - phi0(r_i)|^2``."""
    x = as_tensor(points)
    y = _targets(targets, layer_sizes[-1])
    if x.shape[0] == 0:
        raise ValueError("empty point set")

    def loss(theta):
        out = neural.torch_forward(theta, layer_sizes, x)
        return ((out - y) ** 2).sum(dim=1).mean()

    return loss


def stationary_terms(theta, layer_sizes, x, U_re, U_im, mu):
    """Residual components and the field modulus at the points.

    Returns ``(residual, amplitude)`` with residual of shape ``(N, n_out)``.
    """
    v, _, lap = neural.torch_jet(theta, layer_sizes, x, second="lap")
    if layer_sizes[-1] == 1:
        p = v[:, 0]
        s = p * p
        Lp = -0.5 * lap[:, 0] + (_lhy_t(s) + U_re - mu) * p
        return Lp[:, None], p.abs()
    p, q = v[:, 0], v[:, 1]
    s = p * p + q * q
    g = _lhy_t(s)
    Fp = -0.5 * lap[:, 0] + g * p + U_re * p - U_im * q - mu * p
    Fq = -0.5 * lap[:, 1] + g * q + U_re * q + U_im * p - mu * q
    return torch.stack([Fp, Fq], dim=1), torch.sqrt(s)


def make_stationary_loss(layer_sizes, problem: StationaryProblem, points):
    """``theta -> (1/N) sum_i |L phi(r_i)|^2 / max_i |phi(r_i)|``.

    The max is taken through the first maximizing training point.
    """
    points = np.asarray(points, dtype=float)
    if points.shape[0] == 0:
        raise ValueError("empty point set")
    U = eval_potential(problem.potential, points[:, 0], points[:, 1])
    if layer_sizes[-1] == 1 and np.any(U.imag != 0):
        raise ValueError("complex potential needs a two-output network")
    x = as_tensor(points)
    U_re, U_im = as_tensor(U.real), as_tensor(U.imag)
    mu = float(problem.mu)

    def loss(theta):
        res, amp = stationary_terms(theta, layer_sizes, x, U_re, U_im, mu)
        i = torch.argmax(amp)
        peak = amp[i]
        if peak.item() == 0.0:
            raise TrivialSolutionError("network output is zero on all training points")
        return (res ** 2).sum(dim=1).mean() / peak

    return loss


def _np_value(params: MlpParams, loss) -> float:
    return neural.loss_value(loss, params)


def loss_fit(params: MlpParams, seed_fn: Callable, points) -> float:
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        raise ValueError("empty point set")
    targets = seed_fn(points[:, 0], points[:, 1])
    return _np_value(params, make_fit_loss(params.layer_sizes, points, targets))


def loss_stationary_real(params: MlpParams, problem: StationaryProblem, points) -> float:
    if params.n_outputs != 1:
        raise ValueError("real stationary loss needs a one-output network")
    return _np_value(params, make_stationary_loss(params.layer_sizes, problem, points))


def loss_stationary_complex(params: MlpParams, problem: StationaryProblem, points) -> float:
    if params.n_outputs != 2:
        raise ValueError("complex stationary loss needs a two-output network")
    return _np_value(params, make_stationary_loss(params.layer_sizes, problem, points))


# -- training ------------------------------------------------------------------------

def sample_points(grid: Grid2D, n: int, rng: np.random.Generator) -> np.ndarray:
    x = rng.uniform(grid.x_min, grid.x_max, n)
    y = rng.uniform(grid.y_min, grid.y_max, n)
    return np.column_stack([x, y])


def _minimize(loss, theta, n_steps, optimizer, lr, phase, trace):
    def lg(th):
        return neural.loss_gradient(loss, th)

    if optimizer == "lbfgs":
        res = lbfgs_minimize(lg, theta, n_steps, phase=phase, log_every=500)
        trace.extend(res.trace)
        if res.stalled:
            log.warning("%s: L-BFGS line search stalled after %d iterations", phase, res.iterations)
        return res.theta

    if optimizer == "adam":
        theta, _ = adam_minimize(lg, theta, n_steps, lr=lr, phase=phase, trace=trace,
                                 log_every=1000)
        return theta
    for it in range(n_steps):
        f, g = lg(theta)
        trace.append(it, f, np.linalg.norm(g), phase)
        theta = sgd_step(theta, g, lr)
    return theta


def network_field(params: MlpParams, grid: Grid2D) -> ComplexField:
    """Evaluate a stationary (2-input) network on every grid point."""
    out = neural.forward(params, grid.points())
    vals = out[:, 0] if params.n_outputs == 1 else out[:, 0] + 1j * out[:, 1]
    return ComplexField(grid, vals.reshape(grid.shape))


def fit_iinn(points, phi0, problem: StationaryProblem, cfg: IinnConfig,
             init_seed: int | None = None) -> tuple[MlpParams, dict, Trace]:
    """Both IINN stages on explicit points and seed values.

    Returns the trained parameters, a summary dict and the concatenated trace
    (phases ``stage1``, ``stage2`` and optionally ``stage2-lbfgs``).
    """
    points = np.asarray(points, dtype=float)
    phi0 = np.asarray(phi0)
    if points.ndim != 2 or points.shape[1] != 2 or len(points) != len(phi0):
        raise ValueError("points must be (N, 2) with one seed value per point")
    if not np.all(np.isfinite(phi0)):
        raise ValueError("seed values must be finite")
    if not np.any(phi0 != 0):
        raise TrivialSolutionError("seed is identically zero on the training points")
    n_out = cfg.n_outputs
    if n_out is None:
        U = eval_potential(problem.potential, points[:, 0], points[:, 1])
        n_out = 1 if (np.all(np.imag(phi0) == 0) and np.all(U.imag == 0)) else 2
    sizes = (2, *cfg.hidden, n_out)
    if init_seed is None:
        init_seed = int(np.random.default_rng(cfg.rng_seed).integers(2**63 - 1))
    params = glorot_normal_init(sizes, init_seed)
    trace = Trace()

    fit = make_fit_loss(sizes, points, phi0)
    theta = _minimize(fit, params.theta, cfg.stage1_iters, cfg.stage1_optimizer, cfg.lr,
                      "stage1", trace)
    stage1_loss = neural.loss_value(fit, theta)
    log.info("IINN stage 1 done: fit loss %.3e", stage1_loss)

    stat = make_stationary_loss(sizes, problem, points)
    theta = _minimize(stat, theta, cfg.stage2_iters, cfg.stage2_optimizer, cfg.lr,
                      "stage2", trace)
    lbfgs_status = None
    if cfg.stage2_lbfgs_iters > 0:
        res = lbfgs_minimize(lambda th: neural.loss_gradient(stat, th), theta,
                             cfg.stage2_lbfgs_iters, phase="stage2-lbfgs", log_every=500)
        theta = res.theta
        trace.extend(res.trace)
        lbfgs_status = res.status
    stage2_loss = neural.loss_value(stat, theta)
    log.info("IINN stage 2 done: residual loss %.3e", stage2_loss)
    n_lbfgs = sum(1 for r in trace.rows if r.phase == "stage2-lbfgs")
    n_stage2 = sum(1 for r in trace.rows if r.phase == "stage2")
    if cfg.stage2_optimizer == "lbfgs":
        # the L-BFGS trace also records the starting point
        n_stage2 -= 1
    summary = {
        "layer_sizes": list(sizes),
        "stage1_final_loss": stage1_loss,
        "stage2_initial_loss": float(trace.losses("stage2")[0]),
        "stage2_final_loss": stage2_loss,
        "lbfgs_status": lbfgs_status,
        "iterations": {"stage1": cfg.stage1_iters, "stage2": n_stage2,
                       "stage2_lbfgs": max(n_lbfgs - 1, 0)},
    }
    return params.with_theta(theta), summary, trace


def train_iinn(seed: SeedSpec | Callable, problem: StationaryProblem, cfg: IinnConfig,
               oracle: ComplexField | None = None) -> tuple[MlpParams, dict]:
    """Run both IINN stages and return the trained network and a report.

    ``seed`` is a seed spec or a ready ``phi0(x, y)`` callable. Training
    points are drawn uniformly in the problem grid's rectangle. When an
    ``oracle`` field is given the report carries the relative L2 error of the
    learned state on the oracle grid.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.rng_seed)
    seed_fn = seed if callable(seed) else build_seed(seed, problem.potential, problem.grid)
    points = sample_points(problem.grid, cfg.n_points, rng)
    phi0 = seed_fn(points[:, 0], points[:, 1])
    params, summary, trace = fit_iinn(points, phi0, problem, cfg,
                                      init_seed=int(rng.integers(2**63 - 1)))
    report = {"config": asdict(cfg), **summary, "wall_clock_s": time.perf_counter() - t0}
    if oracle is not None:
        pred = network_field(params, oracle.grid)
        report["rel_l2"] = relative_l2(pred, oracle)
        report["rel_l2_phase_aligned"] = phase_aligned_relative_l2(pred, oracle)
        report["rel_l2_p"] = relative_l2(pred.values.real, oracle.values.real)
        if np.any(oracle.values.imag):
            report["rel_l2_q"] = relative_l2(pred.values.imag, oracle.values.imag)
    report["trace"] = trace
    return params, report
