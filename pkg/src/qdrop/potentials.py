"""External trapping potentials U(r) and their symmetry checks.

All evaluators are vectorized over ``x`` and ``y`` arrays of equal shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .grid import ComplexField, Grid2D, make_grid


@dataclass(frozen=True)
class Zero:
    kind = "zero"


@dataclass(frozen=True)
class Harmonic:
    """U = x^2 + y^2."""
    kind = "harmonic"


@dataclass(frozen=True)
class QuadWell:
    """Four Gaussian wells ``V0 * sum_j exp(-k |r - r_j|^2)`` at ``(+-x0, +-y0)``."""

    V0: float = -0.5
    k: float = 0.1
    x0: float = 4.0
    y0: float = 4.0
    kind = "quadwell"

    def __post_init__(self):
        # V0 == 0 is accepted as the degenerate empty potential
        if self.V0 > 0:
            raise ValueError(f"quadruple-well depth V0 must be <= 0, got {self.V0}")
        if self.k <= 0:
            raise ValueError(f"well width parameter k must be > 0, got {self.k}")
        if self.x0 <= 0 or self.y0 <= 0:
            raise ValueError("well offsets x0, y0 must be positive")

    def centers(self) -> list[tuple[float, float]]:
        # r_1..r_4 go counter-clockwise from the first quadrant
        return [(self.x0, self.y0), (-self.x0, self.y0),
                (-self.x0, -self.y0), (self.x0, -self.y0)]


@dataclass(frozen=True)
class PtHog:
    """PT-symmetric harmonic-Gaussian potential ``V + iW``."""

    V0: float = -1.0 / 16.0
    W0: float = 1.0
    kind = "pthog"


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Samples of U on a grid, bilinearly interpolated between nodes."""

    field: ComplexField
    kind = "tabulated"


PotentialSpec = Union[Zero, Harmonic, QuadWell, PtHog, Tabulated]


def eval_quadwell(p: QuadWell, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.zeros(np.broadcast(x, y).shape)
    for cx, cy in p.centers():
        u = u + np.exp(-p.k * ((x - cx) ** 2 + (y - cy) ** 2))
    return p.V0 * u


def eval_pthog(p: PtHog, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r2 = x * x + y * y
    V = r2 * (1.0 + np.exp(-r2)) + p.V0 * (np.exp(-2 * x * x) + np.exp(-2 * y * y))
    W = p.W0 * (x * np.exp(-x * x) + y * np.exp(-y * y))
    return V + 1j * W


def bilinear(field: ComplexField, x, y) -> np.ndarray:
    """Bilinear interpolation of a grid field; exact at grid nodes.

    Raises ``ValueError`` for points outside the grid rectangle.
    """
    g = field.grid
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.all(g.contains(x, y)):
        raise ValueError("interpolation point outside tabulated grid")
    sx = (x - g.x_min) / g.dx
    sy = (y - g.y_min) / g.dy
    # snap coordinates that are nodes up to rounding so nodes reproduce exactly
    rx, ry = np.rint(sx), np.rint(sy)
    sx = np.where(np.abs(sx - rx) < 1e-9, rx, sx)
    sy = np.where(np.abs(sy - ry) < 1e-9, ry, sy)
    sx = np.clip(sx, 0, g.nx - 1)
    sy = np.clip(sy, 0, g.ny - 1)
    i = np.minimum(np.floor(sx).astype(int), g.nx - 2)
    j = np.minimum(np.floor(sy).astype(int), g.ny - 2)
    tx = sx - i
    ty = sy - j
    v = field.values
    out = ((1 - tx) * (1 - ty) * v[i, j] + tx * (1 - ty) * v[i + 1, j]
           + (1 - tx) * ty * v[i, j + 1] + tx * ty * v[i + 1, j + 1])
    # exact node values (avoid 0*x rounding noise for non-finite-free data)
    on_node = (tx == 0) & (ty == 0)
    return np.where(on_node, v[i, j], out)


def eval_potential(spec: PotentialSpec, x, y) -> np.ndarray:
    """Complex potential values at the given coordinates."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shape = np.broadcast(x, y).shape
    if isinstance(spec, Zero):
        return np.zeros(shape, dtype=complex)
    if isinstance(spec, Harmonic):
        return (x * x + y * y + np.zeros(shape)).astype(complex)
    if isinstance(spec, QuadWell):
        return eval_quadwell(spec, x, y).astype(complex)
    if isinstance(spec, PtHog):
        return eval_pthog(spec, x, y)
    if isinstance(spec, Tabulated):
        return bilinear(spec.field, x, y)
    raise TypeError(f"unknown potential spec {spec!r}")


def potential_on_grid(spec: PotentialSpec, grid: Grid2D) -> np.ndarray:
    X, Y = grid.mesh()
    return eval_potential(spec, X, Y)


def is_real(spec: PotentialSpec) -> bool:
    if isinstance(spec, PtHog):
        return spec.W0 == 0
    if isinstance(spec, Tabulated):
        return bool(np.all(spec.field.values.imag == 0))
    return True


def pt_violation(spec: PotentialSpec, grid: Grid2D) -> float:
    """``max |U(-r) - conj(U(r))|`` over the grid points."""
    if not grid.is_symmetric():
        raise ValueError("PT check needs a grid symmetric about the origin")
    if isinstance(spec, Tabulated):
        if spec.field.grid != grid:
            U = potential_on_grid(spec, grid)
        else:
            U = spec.field.values
        return float(np.max(np.abs(U[::-1, ::-1] - np.conj(U))))
    X, Y = grid.mesh()
    # evaluate at exact negated coordinates so the check does not depend on
    # the grid mirroring bit-exactly
    return float(np.max(np.abs(eval_potential(spec, -X, -Y) - np.conj(eval_potential(spec, X, Y)))))


def tabulate(spec: PotentialSpec, grid: Grid2D) -> Tabulated:
    return Tabulated(ComplexField(grid, potential_on_grid(spec, grid)))


def potential_to_dict(spec: PotentialSpec) -> dict:
    if isinstance(spec, (Zero, Harmonic)):
        return {"kind": spec.kind}
    if isinstance(spec, QuadWell):
        return {"kind": spec.kind, "V0": spec.V0, "k": spec.k, "x0": spec.x0, "y0": spec.y0}
    if isinstance(spec, PtHog):
        return {"kind": spec.kind, "V0": spec.V0, "W0": spec.W0}
    if isinstance(spec, Tabulated):
        g = spec.field.grid
        return {"kind": spec.kind, "grid": [*g.bounds, g.nx, g.ny],
                "re": spec.field.values.real.ravel().tolist(),
                "im": spec.field.values.imag.ravel().tolist()}
    raise TypeError(f"unknown potential spec {spec!r}")


def potential_from_dict(d: dict) -> PotentialSpec:
    kind = d["kind"]
    if kind == "zero":
        return Zero()
    if kind == "harmonic":
        return Harmonic()
    if kind == "quadwell":
        return QuadWell(V0=float(d["V0"]), k=float(d["k"]),
                        x0=float(d.get("x0", 4.0)), y0=float(d.get("y0", 4.0)))
    if kind == "pthog":
        return PtHog(V0=float(d["V0"]), W0=float(d["W0"]))
    if kind == "tabulated":
        *b, nx, ny = d["grid"]
        grid = make_grid(b, nx, ny)
        vals = np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)
        return Tabulated(ComplexField(grid, vals))
    raise ValueError(f"unknown potential kind {kind!r}")
