"""Uniform 2D grids, complex fields on them, quadrature and error metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid2D:
    """Uniform endpoint-inclusive rectangular grid.

    Point ``(i, j)`` sits at ``(x_min + i*dx, y_min + j*dy)``; arrays living on
    the grid are indexed ``[i, j]`` (x first).
    """

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int

    def __post_init__(self):
        bounds = (self.x_min, self.x_max, self.y_min, self.y_max)
        if not all(np.isfinite(b) for b in bounds):
            raise ValueError(f"grid bounds must be finite, got {bounds}")
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError("grid point counts must be integers")
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"need at least 2 points per axis, got {self.nx}x{self.ny}")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError(f"grid bounds must be increasing, got {bounds}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / (self.ny - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.x_max, self.y_min, self.y_max)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + np.arange(self.nx) * self.dx

    @property
    def y(self) -> np.ndarray:
        return self.y_min + np.arange(self.ny) * self.dy

    def point(self, i: int, j: int) -> tuple[float, float]:
        return (self.x_min + i * self.dx, self.y_min + j * self.dy)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    def points(self) -> np.ndarray:
        """All grid points as an ``(nx*ny, 2)`` array in row-major order."""
        X, Y = self.mesh()
        return np.column_stack([X.ravel(), Y.ravel()])

    def is_symmetric(self, atol: float = 1e-12) -> bool:
        """True when the point set is mapped onto itself by r -> -r."""
        return (abs(self.x_min + self.x_max) <= atol * max(1.0, abs(self.x_max))
                and abs(self.y_min + self.y_max) <= atol * max(1.0, abs(self.y_max)))

    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Angular wavenumbers for the periodic extension with period n*d."""
        kx = 2 * np.pi * np.fft.fftfreq(self.nx, d=self.dx)
        ky = 2 * np.pi * np.fft.fftfreq(self.ny, d=self.dy)
        return kx, ky

    def contains(self, x, y) -> np.ndarray:
        x = np.asarray(x)
        y = np.asarray(y)
        tol = 1e-12 * max(1.0, abs(self.x_max), abs(self.x_min), abs(self.y_max), abs(self.y_min))
        return ((x >= self.x_min - tol) & (x <= self.x_max + tol)
                & (y >= self.y_min - tol) & (y <= self.y_max + tol))


@dataclass(frozen=True)
class SpaceTimeDomain:
    grid: Grid2D
    t_max: float

    def __post_init__(self):
        if not np.isfinite(self.t_max) or self.t_max < 0:
            raise ValueError(f"t_max must be finite and >= 0, got {self.t_max}")


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Complex samples on a :class:`Grid2D`, stored as an ``(nx, ny)`` array."""

    grid: Grid2D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.size != self.grid.nx * self.grid.ny:
            raise ValueError(
                f"field has {v.size} samples but grid has {self.grid.nx}x{self.grid.ny}")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def abs(self) -> np.ndarray:
        return np.abs(self.values)

    def with_values(self, values) -> "ComplexField":
        return ComplexField(self.grid, values)

    def __mul__(self, c) -> "ComplexField":
        return ComplexField(self.grid, self.values * c)

    __rmul__ = __mul__


def make_grid(bounds, nx: int, ny: int) -> Grid2D:
    """Build a uniform grid from ``(x_min, x_max, y_min, y_max)``.

    >>> make_grid([-1, 1, -1, 1], 3, 3).x
    array([-1.,  0.,  1.])
    """
    bounds = tuple(float(b) for b in bounds)
    if len(bounds) != 4:
        raise ValueError("bounds must be (x_min, x_max, y_min, y_max)")
    return Grid2D(*bounds, nx=int(nx), ny=int(ny))


def trapezoid_weights(grid: Grid2D) -> np.ndarray:
    wx = np.full(grid.nx, grid.dx)
    wx[[0, -1]] *= 0.5
    wy = np.full(grid.ny, grid.dy)
    wy[[0, -1]] *= 0.5
    return np.outer(wx, wy)


def norm_squared_integral(f: ComplexField) -> float:
    """Trapezoidal approximation of the integral of ``|f|^2`` over the grid."""
    dens = np.abs(f.values) ** 2
    if not np.all(np.isfinite(dens)):
        raise ValueError("field values must be finite")
    return float(np.sum(trapezoid_weights(f.grid) * dens))


def relative_l2(pred, ref) -> float:
    """``||pred - ref|| / ||ref||`` with plain (unweighted) sample 2-norms.

    Accepts :class:`ComplexField` pairs on the same grid or raw arrays of the
    same shape.
    """
    if isinstance(pred, ComplexField) or isinstance(ref, ComplexField):
        if not (isinstance(pred, ComplexField) and isinstance(ref, ComplexField)):
            raise TypeError("relative_l2 needs two ComplexField or two arrays")
        if pred.grid != ref.grid:
            raise ValueError("fields live on different grids")
        a, b = pred.values, ref.values
    else:
        a, b = np.asarray(pred), np.asarray(ref)
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    den = np.linalg.norm(np.ravel(b))
    if den == 0:
        raise ZeroDivisionError("reference has zero norm")
    return float(np.linalg.norm(np.ravel(a - b)) / den)


def phase_aligned_relative_l2(pred, ref) -> float:
    """Relative L2 error after removing the best global phase ``e^{i theta}``.

    Stationary states are only defined up to a global phase, so comparisons of
    independently computed complex states should use this.
    """
    a = np.ravel(pred.values if isinstance(pred, ComplexField) else np.asarray(pred))
    b = np.ravel(ref.values if isinstance(ref, ComplexField) else np.asarray(ref))
    overlap = np.vdot(a, b)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return relative_l2(a * phase, b)
