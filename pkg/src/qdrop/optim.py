"""SGD, Adam and L-BFGS over flat float64 parameter vectors.

Loss callbacks have the signature ``f(theta) -> (loss, grad)``.
"""

from __future__ import annotations

import csv
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

MACHINE_EPS = float(np.finfo(float).eps)

LossAndGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]


def _check_grad(grad):
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient")
    return grad


def sgd_step(params, grad, lr: float) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    grad = _check_grad(grad)
    if params.shape != grad.shape:
        raise ValueError(f"shape mismatch {params.shape} vs {grad.shape}")
    return params - lr * grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, lr: float = 1e-3, **kw) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), lr=lr, **kw)


def adam_step(state: AdamState, params, grad) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update. ``state`` is updated in place and returned."""
    params = np.asarray(params, dtype=np.float64)
    grad = _check_grad(grad)
    if params.shape != grad.shape or state.m.shape != grad.shape:
        raise ValueError("parameter, gradient and moment shapes differ")
    state.t += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    m_hat = state.m / (1 - state.beta1 ** state.t)
    v_hat = state.v / (1 - state.beta2 ** state.t)
    return state, params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def relative_decrease_stop(loss_prev: float, loss_next: float, eps: float = MACHINE_EPS) -> bool:
    """True when ``(L_k - L_{k+1}) / max(|L_k|, |L_{k+1}|, 1) <= eps``."""
    return (loss_prev - loss_next) / max(abs(loss_prev), abs(loss_next), 1.0) <= eps


@dataclass
class TraceRow:
    iteration: int
    loss: float
    grad_norm: float
    phase: str


@dataclass
class Trace:
    rows: list[TraceRow] = field(default_factory=list)

    def append(self, iteration, loss, grad_norm, phase):
        self.rows.append(TraceRow(int(iteration), float(loss), float(grad_norm), phase))

    def losses(self, phase: str | None = None) -> np.ndarray:
        return np.array([r.loss for r in self.rows if phase is None or r.phase == phase])

    def extend(self, other: "Trace"):
        self.rows.extend(other.rows)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "loss", "grad_norm", "phase"])
            for r in self.rows:
                w.writerow([r.iteration, repr(r.loss), repr(r.grad_norm), r.phase])

    @classmethod
    def from_csv(cls, path) -> "Trace":
        tr = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                tr.append(int(row["iteration"]), float(row["loss"]),
                          float(row["grad_norm"]), row["phase"])
        return tr

    def __len__(self):
        return len(self.rows)


def adam_minimize(loss_and_grad: LossAndGrad, theta, n_steps: int, lr: float = 1e-3,
                  phase: str = "adam", trace: Trace | None = None,
                  log_every: int = 0) -> tuple[np.ndarray, Trace]:
    """Run ``n_steps`` full-batch Adam steps; the trace records the loss before each step."""
    theta = np.array(theta, dtype=np.float64)
    trace = Trace() if trace is None else trace
    state = AdamState.zeros(theta.size, lr=lr)
    for it in range(n_steps):
        loss, grad = loss_and_grad(theta)
        trace.append(it, loss, np.linalg.norm(grad), phase)
        if log_every and it % log_every == 0:
            log.info("%s step %d loss %.6e", phase, it, loss)
        state, theta = adam_step(state, theta, grad)
    return theta, trace


# -- L-BFGS -----------------------------------------------------------------

@dataclass
class LbfgsState:
    memory: int = 50
    c1: float = 1e-4
    c2: float = 0.9
    max_ls: int = 25
    s_hist: deque = field(default_factory=deque)
    y_hist: deque = field(default_factory=deque)

    def push(self, s, y) -> bool:
        """Store a curvature pair if ``s.y > 0``; returns whether it was kept."""
        sy = float(s @ y)
        if sy <= 1e-300:
            return False
        self.s_hist.append(s)
        self.y_hist.append(y)
        while len(self.s_hist) > self.memory:
            self.s_hist.popleft()
            self.y_hist.popleft()
        return True

    def direction(self, g) -> np.ndarray:
        """Two-loop recursion: returns ``-H g``."""
        q = g.copy()
        alphas = []
        for s, y in zip(reversed(self.s_hist), reversed(self.y_hist)):
            rho = 1.0 / (y @ s)
            a = rho * (s @ q)
            q -= a * y
            alphas.append((rho, a))
        if self.s_hist:
            s, y = self.s_hist[-1], self.y_hist[-1]
            q *= (s @ y) / (y @ y)
        for (s, y), (rho, a) in zip(zip(self.s_hist, self.y_hist), reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        return -q


@dataclass
class LbfgsResult:
    theta: np.ndarray
    trace: Trace
    status: str
    iterations: int
    n_evals: int

    @property
    def stalled(self) -> bool:
        return self.status == "line_search_failed"


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic interpolating (a, fa, ga), (b, fb, gb), or None."""
    d1 = ga + gb - 3 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(disc)
    x = b - (b - a) * (gb + d2 - d1) / (gb - ga + 2 * d2)
    if not np.isfinite(x):
        return None
    return x


def strong_wolfe(phi, f0, g0, alpha1=1.0, c1=1e-4, c2=0.9, max_iter=25, alpha_max=1e10):
    """Line search for the strong Wolfe conditions.

    ``phi(alpha) -> (f, dphi, payload)``. Returns ``(alpha, f, payload)`` or
    ``None`` when no acceptable step is found.
    """
    def zoom(lo, hi, n_left):
        a_lo, f_lo, g_lo, p_lo = lo
        a_hi, f_hi, g_hi, _ = hi
        for _ in range(n_left):
            a = _cubic_min(a_lo, f_lo, g_lo, a_hi, f_hi, g_hi)
            lo_b, hi_b = min(a_lo, a_hi), max(a_lo, a_hi)
            width = hi_b - lo_b
            if a is None or a < lo_b + 0.1 * width or a > hi_b - 0.1 * width:
                a = 0.5 * (a_lo + a_hi)
            f, g, p = phi(a)
            if f > f0 + c1 * a * g0 or f >= f_lo:
                a_hi, f_hi, g_hi = a, f, g
            else:
                if abs(g) <= -c2 * g0:
                    return a, f, p
                if g * (a_hi - a_lo) >= 0:
                    a_hi, f_hi, g_hi = a_lo, f_lo, g_lo
                a_lo, f_lo, g_lo, p_lo = a, f, g, p
            if abs(a_hi - a_lo) <= 1e-16 * max(1.0, abs(a_lo)):
                break
        # fall back to the best sufficient-decrease point seen
        if p_lo is not None and f_lo < f0:
            return a_lo, f_lo, p_lo
        return None

    prev = (0.0, f0, g0, None)
    a = alpha1
    for i in range(max_iter):
        f, g, p = phi(a)
        if not np.isfinite(f):
            # shrink into the finite region
            a = 0.5 * (prev[0] + a)
            continue
        if f > f0 + c1 * a * g0 or (i > 0 and f >= prev[1]):
            return zoom(prev, (a, f, g, p), max_iter)
        if abs(g) <= -c2 * g0:
            return a, f, p
        if g >= 0:
            return zoom((a, f, g, p), prev, max_iter)
        prev = (a, f, g, p)
        a = min(2.0 * a, alpha_max)
    return None


def lbfgs_minimize(loss_and_grad: LossAndGrad, theta, max_iter: int, memory: int = 50,
                   c1: float = 1e-4, c2: float = 0.9, stop_eps: float = MACHINE_EPS,
                   gtol: float = 0.0, phase: str = "lbfgs",
                   log_every: int = 0) -> LbfgsResult:
    """L-BFGS with a strong-Wolfe line search and relative-decrease stopping.

    Stops when ``(L_k - L_{k+1}) / max(|L_k|, |L_{k+1}|, 1) <= stop_eps``, when
    the gradient norm falls to ``gtol``, after ``max_iter`` iterations, or when
    the line search fails (``status == "line_search_failed"``; the best point
    so far is returned, not an exception).
    """
    theta = np.array(theta, dtype=np.float64)
    state = LbfgsState(memory=memory, c1=c1, c2=c2)
    trace = Trace()
    f, g = loss_and_grad(theta)
    if not np.isfinite(f):
        raise FloatingPointError("initial loss is not finite")
    n_evals = 1
    trace.append(0, f, np.linalg.norm(g), phase)
    status = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        gnorm = np.linalg.norm(g)
        if gnorm <= gtol:
            status = "gtol"
            it -= 1
            break
        d = state.direction(g)
        dg = float(d @ g)
        if not dg < 0:
            # lost descent; restart from steepest descent
            state.s_hist.clear()
            state.y_hist.clear()
            d = -g
            dg = -float(g @ g)
        alpha1 = 1.0 if state.s_hist else min(1.0, 1.0 / gnorm)

        def phi(a, d=d):
            nonlocal n_evals
            th = theta + a * d
            n_evals += 1
            try:
                fa, ga = loss_and_grad(th)
            except FloatingPointError:
                # overshoot into a non-finite region; the line search backs off
                return np.inf, np.nan, None
            return fa, float(ga @ d), (th, ga)

        res = strong_wolfe(phi, f, dg, alpha1=alpha1, c1=c1, c2=c2, max_iter=state.max_ls)
        if res is None:
            status = "line_search_failed"
            it -= 1
            log.warning("%s: line search failed at iteration %d (loss %.6e)", phase, it, f)
            break
        _, f_new, (theta_new, g_new) = res
        state.push(theta_new - theta, g_new - g)
        f_old = f
        theta, f, g = theta_new, f_new, g_new
        trace.append(it, f, np.linalg.norm(g), phase)
        if log_every and it % log_every == 0:
            log.info("%s iter %d loss %.6e", phase, it, f)
        if relative_decrease_stop(f_old, f, stop_eps):
            status = "converged"
            break
    return LbfgsResult(theta, trace, status, it, n_evals)
