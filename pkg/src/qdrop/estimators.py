"""scikit-learn style wrappers around the IINN and PINN solvers.

``IinnSolver.fit(X, y)`` takes training points ``X`` of shape ``(N, 2)`` and
seed values ``y`` at those points; ``predict`` evaluates the learned
stationary state. ``PinnSolver.fit(X, y)`` takes initial-time points and
initial values; ``predict`` takes ``(x, y, t)`` rows.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import neural
from .grid import SpaceTimeDomain, make_grid
from .iinn import IinnConfig, fit_iinn, make_stationary_loss
from .pinn import PinnConfig, SampleSets, fit_pinn, residual_f, sample_boundary
from .potentials import QuadWell
from .spectral import StationaryProblem


def check_points(X, n_cols: int, name: str = "X") -> np.ndarray:
    """Finite float64 array of shape ``(N, n_cols)`` with N >= 1."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True)
    if X.shape[1] != n_cols:
        raise ValueError(f"{name} must have {n_cols} columns, got {X.shape[1]}")
    return X


def check_values(y, n: int) -> np.ndarray:
    """Finite complex vector of length ``n``."""
    y = np.asarray(y)
    if y.ndim == 2 and y.shape[1] == 2 and not np.iscomplexobj(y):
        y = y[:, 0] + 1j * y[:, 1]
    y = np.asarray(y, dtype=np.complex128).ravel()
    if y.shape[0] != n:
        raise ValueError(f"expected {n} target values, got {y.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise ValueError("target values must be finite")
    return y


def _bounds_of(bounds, X) -> tuple[float, float, float, float]:
    if bounds is not None:
        return tuple(float(b) for b in bounds)
    return (X[:, 0].min(), X[:, 0].max(), X[:, 1].min(), X[:, 1].max())


class IinnSolver(BaseEstimator):
    """Two-stage IINN for the stationary equation at chemical potential ``mu``."""

    def __init__(self, potential=None, mu=-0.5, bounds=None, stage1_iters=20000,
                 stage2_iters=3000, stage2_lbfgs_iters=0, stage1_optimizer="adam",
                 stage2_optimizer="adam", lr=1e-3, hidden=(100, 100, 100, 100),
                 n_outputs=None, random_state=0):
        self.potential = potential
        self.mu = mu
        self.bounds = bounds
        self.stage1_iters = stage1_iters
        self.stage2_iters = stage2_iters
        self.stage2_lbfgs_iters = stage2_lbfgs_iters
        self.stage1_optimizer = stage1_optimizer
        self.stage2_optimizer = stage2_optimizer
        self.lr = lr
        self.hidden = hidden
        self.n_outputs = n_outputs
        self.random_state = random_state

    def _problem(self, X) -> StationaryProblem:
        pot = self.potential if self.potential is not None else QuadWell()
        return StationaryProblem(float(self.mu), pot, make_grid(_bounds_of(self.bounds, X), 2, 2))

    def fit(self, X, y):
        X = check_points(X, 2)
        y = check_values(y, len(X))
        cfg = IinnConfig(n_points=len(X), stage1_iters=self.stage1_iters,
                         stage2_iters=self.stage2_iters,
                         stage2_lbfgs_iters=self.stage2_lbfgs_iters,
                         stage1_optimizer=self.stage1_optimizer,
                         stage2_optimizer=self.stage2_optimizer, lr=self.lr,
                         hidden=tuple(self.hidden), n_outputs=self.n_outputs,
                         rng_seed=int(self.random_state))
        self.params_, self.summary_, self.trace_ = fit_iinn(X, y, self._problem(X), cfg)
        self.n_features_in_ = 2
        return self

    def predict(self, X) -> np.ndarray:
        """Complex field values at the rows of ``X``."""
        check_is_fitted(self, "params_")
        X = check_points(X, 2)
        out = neural.forward(self.params_, X)
        return out[:, 0].astype(complex) if out.shape[1] == 1 else out[:, 0] + 1j * out[:, 1]

    def transform(self, X) -> np.ndarray:
        """``(N, 2)`` array of real and imaginary parts."""
        v = self.predict(X)
        return np.column_stack([v.real, v.imag])

    def score(self, X, y=None) -> float:
        """Negative stationary loss on ``X`` (higher is better)."""
        check_is_fitted(self, "params_")
        X = check_points(X, 2)
        loss = make_stationary_loss(self.params_.layer_sizes, self._problem(X), X)
        return -neural.loss_value(loss, self.params_)


class PinnSolver(BaseEstimator):
    """PINN for the time-dependent equation on ``bounds x [0, t_max]``.

    ``fit`` uses the given initial points as the initial set and draws the
    collocation and boundary sets uniformly.
    """

    def __init__(self, potential=None, bounds=(-12.0, 12.0, -12.0, 12.0), t_max=5.0,
                 n_collocation=20000, n_boundary=150, adam_steps=40000, lbfgs_steps=10000,
                 lr=1e-3, hidden=(100, 100, 100, 100), random_state=0):
        self.potential = potential
        self.bounds = bounds
        self.t_max = t_max
        self.n_collocation = n_collocation
        self.n_boundary = n_boundary
        self.adam_steps = adam_steps
        self.lbfgs_steps = lbfgs_steps
        self.lr = lr
        self.hidden = hidden
        self.random_state = random_state

    def _potential(self):
        return self.potential if self.potential is not None else QuadWell()

    def fit(self, X, y):
        X = check_points(X, 2)
        y = check_values(y, len(X))
        grid = make_grid(self.bounds, 2, 2)
        if not np.all(grid.contains(X[:, 0], X[:, 1])):
            raise ValueError("initial points must lie inside bounds")
        domain = SpaceTimeDomain(grid, float(self.t_max))
        cfg = PinnConfig(n_collocation=self.n_collocation, n_boundary=self.n_boundary,
                         n_initial=len(X), adam_steps=self.adam_steps,
                         lbfgs_steps=self.lbfgs_steps, lr=self.lr, hidden=tuple(self.hidden),
                         rng_seed=int(self.random_state))
        rng = np.random.default_rng(cfg.rng_seed)
        xf = np.column_stack([rng.uniform(grid.x_min, grid.x_max, cfg.n_collocation),
                              rng.uniform(grid.y_min, grid.y_max, cfg.n_collocation),
                              rng.uniform(0.0, domain.t_max, cfg.n_collocation)])
        xb = sample_boundary(grid, domain.t_max, cfg.n_boundary, rng)
        sets = SampleSets(xf, xb, X, np.column_stack([y.real, y.imag]))
        self.params_, self.summary_, self.trace_ = fit_pinn(
            sets, self._potential(), cfg, init_seed=int(rng.integers(2**63 - 1)))
        self.sets_ = sets
        self.n_features_in_ = 3
        return self

    def predict(self, X) -> np.ndarray:
        """Complex psi at ``(x, y, t)`` rows."""
        check_is_fitted(self, "params_")
        X = check_points(X, 3)
        out = neural.forward(self.params_, X)
        return out[:, 0] + 1j * out[:, 1]

    def residual(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = check_points(X, 3)
        fp, fq = residual_f(self.params_, self._potential(), X)
        return fp + 1j * fq
