"""Fourier-spectral reference solvers.

* :func:`linear_spectrum` - lowest eigenpairs of ``H = -lap + U``.
* :func:`solve_stationary` - localized solutions of
  ``mu phi = -1/2 lap phi + 2 ln(2|phi|^2)|phi|^2 phi + U phi``.
* :func:`evolve_split_step` - Strang-split propagation of
  ``i psi_t = -1/2 lap psi + 2 ln(2|psi|^2)|psi|^2 psi + U psi``.

All Laplacians use the periodic extension of the grid (period ``n*dx``), which
is harmless for fields that vanish at the boundary.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs

from .grid import ComplexField, Grid2D
from .potentials import PotentialSpec, potential_on_grid

log = logging.getLogger(__name__)

# below this density (exclusive) the LHY term s*ln(2s) is set to its limit 0
S_FLOOR = 1e-300


def lhy(s: np.ndarray) -> np.ndarray:
    """``G(s) = 2 s ln(2 s)``, the LHY factor multiplying psi (``s = |psi|^2``)."""
    s = np.asarray(s, dtype=float)
    safe = np.where(s >= S_FLOOR, s, 1.0)
    return np.where(s >= S_FLOOR, 2.0 * safe * np.log(2.0 * safe), 0.0)


def lhy_prime(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    safe = np.where(s >= S_FLOOR, s, 1.0)
    return np.where(s >= S_FLOOR, 2.0 * np.log(2.0 * safe) + 2.0, 0.0)


def k_squared(grid: Grid2D) -> np.ndarray:
    kx, ky = grid.wavenumbers()
    return kx[:, None] ** 2 + ky[None, :] ** 2


def laplacian(values: np.ndarray, grid: Grid2D, k2: np.ndarray | None = None) -> np.ndarray:
    k2 = k_squared(grid) if k2 is None else k2
    return np.fft.ifft2(-k2 * np.fft.fft2(values))


@dataclass(frozen=True)
class StationaryProblem:
    mu: float
    potential: PotentialSpec
    grid: Grid2D


@dataclass
class LinearMode:
    eigenvalue: complex
    mode: ComplexField
    residual: float = 0.0


class ConvergenceError(RuntimeError):
    """A reference solver stopped without meeting its tolerance."""

    def __init__(self, message, residual=np.nan, iterations=0, field=None, reason="max_iter"):
        super().__init__(f"{message} (reason={reason}, residual={residual:.3e}, "
                         f"iterations={iterations})")
        self.residual = residual
        self.iterations = iterations
        self.field = field
        self.reason = reason


# -- linear modes -----------------------------------------------------------

def _normalize_mode(v: np.ndarray) -> np.ndarray:
    """Scale to max |v| = 1 with a real positive value at the peak."""
    k = np.argmax(np.abs(v))
    return v / v.ravel()[k]


def linear_spectrum(spec: PotentialSpec, grid: Grid2D, n_modes: int, tol: float = 1e-12,
                    max_iter: int | None = None, ncv: int | None = None) -> list[LinearMode]:
    """Eigenpairs of ``-lap + U`` with the smallest real parts, ascending.

    The operator is applied matrix-free (FFT Laplacian) inside ARPACK's
    implicitly restarted Arnoldi iteration.
    """
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    U = potential_on_grid(spec, grid)
    k2 = k_squared(grid)
    nx, ny = grid.shape
    n = nx * ny

    def matvec(v):
        f = v.reshape(nx, ny)
        return (np.fft.ifft2(k2 * np.fft.fft2(f)) + U * f).ravel()

    op = LinearOperator((n, n), matvec=matvec, dtype=complex)
    # a few extra eigenpairs keep a degenerate multiplet from being split
    k = min(n_modes + 2, n - 2)
    ncv = ncv or min(n - 1, max(2 * k + 1, 40))
    v0 = np.ones(n, dtype=complex)
    try:
        w, V = eigs(op, k=k, which="SR", tol=tol, ncv=ncv,
                    maxiter=max_iter or 100 * n, v0=v0)
    except ArpackNoConvergence as exc:
        resid = []
        for lam, vec in zip(exc.eigenvalues, exc.eigenvectors.T):
            resid.append(np.linalg.norm(matvec(vec) - lam * vec) / np.linalg.norm(vec))
        raise ConvergenceError("Arnoldi eigensolver did not converge",
                               residual=max(resid) if resid else np.nan,
                               reason="eigensolver") from exc
    order = np.lexsort((w.imag, w.real))[:n_modes]
    modes = []
    for idx in order:
        vec = V[:, idx]
        res = np.linalg.norm(matvec(vec) - w[idx] * vec) / np.linalg.norm(vec)
        if res > max(1e3 * tol, 1e-8) * max(1.0, abs(w[idx])):
            raise ConvergenceError("eigenpair residual above tolerance", residual=res,
                                   reason="eigensolver")
        modes.append(LinearMode(complex(w[idx]),
                                ComplexField(grid, _normalize_mode(vec.reshape(nx, ny))),
                                float(res)))
    return modes


def dense_hamiltonian(spec: PotentialSpec, grid: Grid2D) -> np.ndarray:
    """Explicit matrix of ``-lap + U`` (Fourier differentiation); small grids only."""
    nx, ny = grid.shape
    kx, ky = grid.wavenumbers()
    d2x = np.fft.ifft(-(kx ** 2)[:, None] * np.fft.fft(np.eye(nx), axis=0), axis=0)
    d2y = np.fft.ifft(-(ky ** 2)[:, None] * np.fft.fft(np.eye(ny), axis=0), axis=0)
    lap = np.kron(d2x, np.eye(ny)) + np.kron(np.eye(nx), d2y)
    return -lap + np.diag(potential_on_grid(spec, grid).ravel())


# -- stationary states --------------------------------------------------------

def stationary_residual(f: ComplexField, problem: StationaryProblem) -> ComplexField:
    """Pointwise ``-1/2 lap f + G(|f|^2) f + U f - mu f``."""
    u = f.values
    U = potential_on_grid(problem.potential, f.grid)
    r = -0.5 * laplacian(u, f.grid) + (lhy(np.abs(u) ** 2) + U - problem.mu) * u
    return ComplexField(f.grid, r)


def residual_norm(f: ComplexField, problem: StationaryProblem) -> float:
    """``||L0 f||_2 / max|f|`` (plain sample 2-norm)."""
    peak = np.max(np.abs(f.values))
    if peak == 0:
        return 0.0
    return float(np.linalg.norm(stationary_residual(f, problem).values) / peak)


class _Operators:
    """Residual, linearization and preconditioner for one stationary problem.

    The preconditioner is ``M = D^{1/2} (c - lap/2) D^{1/2}`` with
    ``D = (c + Re U - min Re U) / c``; the diagonal factor keeps ``M^{-1} L1``
    bounded for potentials that grow towards the box edges.
    """

    def __init__(self, problem: StationaryProblem, c: float):
        self.grid = problem.grid
        self.mu = problem.mu
        self.U = potential_on_grid(problem.potential, problem.grid)
        self.k2 = k_squared(problem.grid)
        self.c = c
        Ur = self.U.real
        self.sqrt_d = np.sqrt((c + Ur - Ur.min()) / c)
        self.symbol = c + 0.5 * self.k2

    def lap(self, f):
        return np.fft.ifft2(-self.k2 * np.fft.fft2(f))

    def L0(self, u):
        return -0.5 * self.lap(u) + (lhy(np.abs(u) ** 2) + self.U - self.mu) * u

    def L1(self, u, h, adjoint=False):
        s = np.abs(u) ** 2
        U = np.conj(self.U) if adjoint else self.U
        # the G'-term is self-adjoint in the real inner product Re<a, b>
        return (-0.5 * self.lap(h) + (U - self.mu + lhy(s)) * h
                + 2.0 * lhy_prime(s) * u * np.real(np.conj(u) * h))

    def Minv(self, f):
        return np.fft.ifft2(np.fft.fft2(f / self.sqrt_d) / self.symbol) / self.sqrt_d

    def M(self, f):
        return self.sqrt_d * np.fft.ifft2(np.fft.fft2(f * self.sqrt_d) * self.symbol)


def _ip(a, b) -> float:
    return float(np.real(np.vdot(a, b)))


def solve_stationary(problem: StationaryProblem, seed: ComplexField, tol: float = 1e-9,
                     max_iter: int = 20000, method: str = "msom", c: float | None = None,
                     dt: float | None = None, info: dict | None = None) -> ComplexField:
    """Iterate from ``seed`` to a localized stationary state.

    ``method="msom"`` is the modified squared-operator iteration (converges to
    any nondegenerate solution near the seed); ``method="ite"`` is
    preconditioned imaginary-time relaxation at fixed ``mu`` (converges only
    to states that minimize the grand-canonical energy, but is cheaper).

    Convergence means ``||L0 phi||_2 / max|phi| <= tol``. The step size is
    halved, and the iteration restarted from the best iterate, whenever the
    residual blows up. ``c`` is the preconditioner shift, by default
    ``max(0.5, mu - min Re U)``. If ``info`` is a dict it receives solver
    metadata.
    """
    if seed.grid != problem.grid:
        raise ValueError("seed must live on the problem grid")
    u = seed.values.copy()
    if not np.any(u):
        raise ValueError("seed field is identically zero")
    if method not in ("msom", "ite"):
        raise ValueError(f"unknown method {method!r}")
    if c is None:
        Umin = potential_on_grid(problem.potential, problem.grid).real.min()
        c = max(0.5, problem.mu - Umin)
    ops = _Operators(problem, c)
    keep_real = bool(np.all(ops.U.imag == 0) and np.all(u.imag == 0))
    dt = (1.0 if method == "msom" else 0.2) if dt is None else dt
    dt0 = dt

    def residual(v):
        peak = np.max(np.abs(v))
        r = ops.L0(v)
        return (np.linalg.norm(r) / peak if peak > 0 else np.inf), r, peak

    res, r, peak = residual(u)
    best = (res, u)
    u_prev = None
    n_halvings = 0
    it = 0
    for it in range(1, max_iter + 1):
        if res <= tol:
            it -= 1
            break
        if method == "msom":
            adj = ops.L1(u, ops.Minv(r), adjoint=True)
            step = ops.Minv(adj)
            if u_prev is not None:
                G = u - u_prev
                L1G = ops.L1(u, G)
                denom = _ip(L1G, ops.Minv(L1G))
                mg = _ip(ops.M(G), G)
                if denom > 0 and mg > 0:
                    alpha = 1.0 / mg - 1.0 / (dt * denom)
                    step = step - alpha * _ip(G, adj) * G
        else:
            step = ops.Minv(r)
        u_prev = u
        u = u - dt * step
        if keep_real:
            u = u.real.astype(complex)
        res, r, peak = residual(u)
        if peak < 1e-12:
            raise ConvergenceError("iteration collapsed to the zero field", res, it,
                                   ComplexField(problem.grid, best[1]), reason="collapse")
        if not np.isfinite(res) or peak > 1e6 or res > 1e3 * max(best[0], tol):
            dt *= 0.5
            n_halvings += 1
            if dt < 1e-8 * dt0:
                raise ConvergenceError("iteration diverged", best[0], it,
                                       ComplexField(problem.grid, best[1]), reason="divergence")
            log.debug("stationary solver: residual jump at %d, dt -> %g", it, dt)
            u, u_prev = best[1], None
            res, r, peak = residual(u)
            continue
        if res < best[0]:
            best = (res, u)
    if info is not None:
        info.update(method=method, iterations=it, residual=float(best[0]), tol=tol,
                    c=c, dt=dt, dt_halvings=n_halvings,
                    grid=[*problem.grid.bounds, problem.grid.nx, problem.grid.ny],
                    boundary_max=float(_boundary_max(best[1])))
    if best[0] > tol:
        raise ConvergenceError("stationary solver hit max_iter", best[0], it,
                               ComplexField(problem.grid, best[1]), reason="max_iter")
    return ComplexField(problem.grid, best[1])


def _boundary_max(u: np.ndarray) -> float:
    return float(max(np.abs(u[0]).max(), np.abs(u[-1]).max(),
                     np.abs(u[:, 0]).max(), np.abs(u[:, -1]).max()))


# -- time evolution ---------------------------------------------------------------

@dataclass
class FieldSeries:
    times: list[float]
    fields: list[ComplexField]
    dt: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid2D:
        return self.fields[0].grid

    def stack(self) -> np.ndarray:
        return np.stack([f.values for f in self.fields])

    def __len__(self):
        return len(self.times)


class EvolutionError(RuntimeError):
    def __init__(self, message, series: FieldSeries, last_valid: int):
        super().__init__(f"{message} (last valid snapshot index {last_valid})")
        self.series = series
        self.last_valid = last_valid


def evolve_split_step(f0: ComplexField, spec: PotentialSpec, t_max: float, dt: float = 1e-3,
                      times=None, nonlinear: bool = True) -> FieldSeries:
    """Second-order Strang splitting (local half step, kinetic step, local half step).

    Snapshots are returned at ``times`` (default ``0, t_max/2, t_max``), each
    rounded to the nearest step of the uniform step ``t_max / ceil(t_max/dt)``.
    The local step applies ``exp(-i (U + G(|psi|^2)) tau)`` with ``|psi|``
    frozen over the substep; for real ``U`` this is exact and norm preserving.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    grid = f0.grid
    n_steps = max(1, int(np.ceil(t_max / dt - 1e-9))) if t_max > 0 else 0
    h = t_max / n_steps if n_steps else dt
    if times is None:
        times = [0.0, 0.5 * t_max, t_max]
    snap_steps = sorted({int(round(t / h)) if n_steps else 0 for t in times})
    if snap_steps and snap_steps[-1] > n_steps:
        raise ValueError("requested snapshot beyond t_max")
    U = potential_on_grid(spec, grid)
    real_u = bool(np.all(U.imag == 0))
    kinetic = np.exp(-0.5j * k_squared(grid) * h)

    def local(psi, tau):
        phase = U + lhy(np.abs(psi) ** 2) if nonlinear else U
        return np.exp(-1j * phase * tau) * psi

    psi = f0.values.copy()
    out_t, out_f = [], []
    targets = iter(snap_steps)
    nxt = next(targets, None)
    pending_half = False
    for step in range(n_steps + 1):
        if step == nxt:
            snap = local(psi, 0.5 * h) if pending_half else psi
            if not np.all(np.isfinite(snap)):
                raise EvolutionError("non-finite field", FieldSeries(out_t, out_f, h),
                                     len(out_t) - 1)
            out_t.append(step * h)
            out_f.append(ComplexField(grid, snap))
            nxt = next(targets, None)
        if step == n_steps:
            break
        # real U: consecutive local half steps commute exactly and are fused
        if pending_half:
            psi = local(psi, h)
        else:
            psi = local(psi, 0.5 * h)
        psi = np.fft.ifft2(kinetic * np.fft.fft2(psi))
        if real_u:
            pending_half = True
        else:
            psi = local(psi, 0.5 * h)
        if not np.all(np.isfinite(psi)):
            raise EvolutionError("non-finite field during evolution",
                                 FieldSeries(out_t, out_f, h), len(out_t) - 1)
    return FieldSeries(out_t, out_f, dt=h,
                       meta={"method": "strang-split-step", "nonlinear": nonlinear,
                             "n_steps": n_steps})
