"""Structured grids and finite-difference operators on lattices.

Lattices are plain numpy arrays. A scalar lattice has shape ``grid.n``; a
vector lattice (magnetization, fields) has shape ``grid.n + (3,)``.

Two boundary modes exist. ``"periodic"`` grids have ``n`` nodes per axis
with spacing ``extent / n`` and wrap around. ``"dirichlet"`` grids have
``n`` nodes with spacing ``extent / (n - 1)``; nodes within a stencil
radius of the boundary form a frozen ring and operators return zero there.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (
    AxisOutOfRange,
    NonPositiveCoefficient,
    NonSPDMatrix,
    ShapeMismatch,
    StencilWiderThanGrid,
    ZeroNormBeforeProjection,
)

PERIODIC = "periodic"
DIRICHLET = "dirichlet"

# Standard central-difference weights, offsets -r..r.
_F = Fraction
FIRST_DERIVATIVE = {
    2: (_F(-1, 2), 0, _F(1, 2)),
    4: (_F(1, 12), _F(-2, 3), 0, _F(2, 3), _F(-1, 12)),
    6: (_F(-1, 60), _F(3, 20), _F(-3, 4), 0, _F(3, 4), _F(-3, 20), _F(1, 60)),
    8: (_F(1, 280), _F(-4, 105), _F(1, 5), _F(-4, 5), 0,
        _F(4, 5), _F(-1, 5), _F(4, 105), _F(-1, 280)),
}
SECOND_DERIVATIVE = {
    2: (1, -2, 1),
    4: (_F(-1, 12), _F(4, 3), _F(-5, 2), _F(4, 3), _F(-1, 12)),
    6: (_F(1, 90), _F(-3, 20), _F(3, 2), _F(-49, 18), _F(3, 2), _F(-3, 20), _F(1, 90)),
    8: (_F(-1, 560), _F(8, 315), _F(-1, 5), _F(8, 5), _F(-205, 72),
        _F(8, 5), _F(-1, 5), _F(8, 315), _F(-1, 560)),
}


def stencil_weights(derivative: int, order: int) -> np.ndarray:
    table = {1: FIRST_DERIVATIVE, 2: SECOND_DERIVATIVE}.get(derivative)
    if table is None or order not in table:
        raise ValueError(f"no central stencil for derivative={derivative}, order={order}")
    return np.array([float(c) for c in table[order]])


@dataclass(frozen=True)
class Grid:
    """Tensor-product grid on ``origin + [0, extent]`` per axis."""

    n: tuple[int, ...]
    extent: tuple[float, ...]
    origin: tuple[float, ...] = field(default=None)
    boundary: str = PERIODIC

    def __post_init__(self):
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        extent = tuple(float(v) for v in np.atleast_1d(self.extent))
        if len(extent) == 1 and len(n) > 1:
            extent = extent * len(n)
        origin = self.origin
        origin = (0.0,) * len(n) if origin is None else tuple(float(v) for v in np.atleast_1d(origin))
        if len(origin) == 1 and len(n) > 1:
            origin = origin * len(n)
        if not 1 <= len(n) <= 3 or len(extent) != len(n) or len(origin) != len(n):
            raise ValueError("grid dimension must be 1, 2 or 3 with matching extent/origin")
        if self.boundary not in (PERIODIC, DIRICHLET):
            raise ValueError(f"unknown boundary mode {self.boundary!r}")
        if any(v < 2 for v in n) or any(e <= 0 for e in extent):
            raise ValueError("grid needs at least 2 nodes and positive extent per axis")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def periodic(cls, n, dim=1, extent=1.0, origin=0.0):
        return cls(n=(n,) * dim if np.isscalar(n) else n, extent=extent, origin=origin)

    @classmethod
    def box(cls, half_nodes: int, spacing: float, dim: int, center=0.0):
        """Dirichlet grid with nodes ``center + j*spacing``, ``|j| <= half_nodes``."""
        center = np.broadcast_to(np.asarray(center, dtype=float), (dim,))
        return cls(
            n=(2 * half_nodes + 1,) * dim,
            extent=(2 * half_nodes * spacing,) * dim,
            origin=tuple(center - half_nodes * spacing),
            boundary=DIRICHLET,
        )

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def periodic_bc(self) -> bool:
        return self.boundary == PERIODIC

    @property
    def spacing(self) -> tuple[float, ...]:
        if self.periodic_bc:
            return tuple(e / k for e, k in zip(self.extent, self.n))
        return tuple(e / (k - 1) for e, k in zip(self.extent, self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing[axis] * np.arange(self.n[axis])

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``n + (dim,)``."""
        axes = [self.axis_coords(a) for a in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def refine(self, factor: int) -> "Grid":
        if not self.periodic_bc:
            raise ValueError("refine is only defined for periodic grids")
        return Grid(tuple(k * factor for k in self.n), self.extent, self.origin, self.boundary)


@dataclass
class MagnetizationField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.n + (3,):
            raise ShapeMismatch(f"expected shape {self.grid.n + (3,)}, got {self.values.shape}")

    def copy(self) -> "MagnetizationField":
        return MagnetizationField(self.grid, self.values.copy())

    def norm_deviation(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.values, axis=-1) - 1.0)))


def normalize(v: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Project every 3-vector of a lattice onto the unit sphere."""
    norms = np.sqrt(np.einsum("...i,...i->...", v, v))
    if np.any(norms < tol):
        raise ZeroNormBeforeProjection(f"vector norm {norms.min():.3e} below {tol:g}")
    return v / norms[..., None]


def _check_axis(f: np.ndarray, grid: Grid, axis: int) -> None:
    if not 0 <= axis < grid.dim:
        raise AxisOutOfRange(f"axis {axis} outside 0..{grid.dim - 1}")
    if f.shape[: grid.dim] != grid.n:
        raise ShapeMismatch(f"lattice shape {f.shape} does not match grid {grid.n}")


def _apply_stencil(f, grid, axis, weights, scale):
    r = len(weights) // 2
    if len(weights) > grid.n[axis]:
        raise StencilWiderThanGrid(
            f"stencil of width {len(weights)} does not fit {grid.n[axis]} nodes on axis {axis}"
        )
    if grid.periodic_bc:
        out = np.zeros_like(f, dtype=float)
        for k, w in zip(range(-r, r + 1), weights):
            if w != 0.0:
                out += w * np.roll(f, -k, axis=axis)
        return out * scale
    out = np.zeros_like(f, dtype=float)
    n = grid.n[axis]
    dst = [slice(None)] * f.ndim
    dst[axis] = slice(r, n - r)
    acc = np.zeros_like(f[tuple(dst)], dtype=float)
    for k, w in zip(range(-r, r + 1), weights):
        if w != 0.0:
            src = [slice(None)] * f.ndim
            src[axis] = slice(r + k, n - r + k)
            acc += w * f[tuple(src)]
    out[tuple(dst)] = acc * scale
    return out


def central_difference(f: np.ndarray, grid: Grid, axis: int, derivative: int = 1,
                       order: int = 2) -> np.ndarray:
    """Central finite-difference derivative of a scalar or vector lattice."""
    f = np.asarray(f, dtype=float)
    _check_axis(f, grid, axis)
    weights = stencil_weights(derivative, order)
    return _apply_stencil(f, grid, axis, weights, 1.0 / grid.spacing[axis] ** derivative)


def half_point_coefficients(coefficient, grid: Grid) -> list[np.ndarray]:
    """``a(x_i + h/2 e_axis)`` for every axis, evaluated analytically."""
    x = grid.coords()
    out = []
    for axis in range(grid.dim):
        shift = np.zeros(grid.dim)
        shift[axis] = 0.5 * grid.spacing[axis]
        out.append(np.asarray(coefficient(x + shift), dtype=float))
    return out


def div_a_grad(a_half, m: np.ndarray, grid: Grid) -> np.ndarray:
    """Conservative second-order approximation of div(a grad m).

    ``a_half[axis]`` holds ``a`` at the half point to the right of each node
    along ``axis``, as returned by :func:`half_point_coefficients`.
    """
    m = np.asarray(m, dtype=float)
    if len(a_half) != grid.dim:
        raise ShapeMismatch("need one half-point coefficient lattice per axis")
    for a in a_half:
        if np.min(a) <= 0.0:
            raise NonPositiveCoefficient(f"coefficient minimum {np.min(a):.3e} is not positive")
    vector = m.ndim == grid.dim + 1
    out = np.zeros_like(m)
    for axis, (a, h) in enumerate(zip(a_half, grid.spacing)):
        a = a[..., None] if vector else a
        if grid.periodic_bc:
            flux = a * (np.roll(m, -1, axis=axis) - m)
            out += (flux - np.roll(flux, 1, axis=axis)) / (h * h)
        else:
            n = grid.n[axis]
            lo = [slice(None)] * m.ndim
            hi = [slice(None)] * m.ndim
            lo[axis] = slice(0, n - 1)
            hi[axis] = slice(1, n)
            flux = a[tuple(lo)] * (m[tuple(hi)] - m[tuple(lo)])
            mid = [slice(None)] * m.ndim
            mid[axis] = slice(1, n - 1)
            f_hi = [slice(None)] * m.ndim
            f_lo = [slice(None)] * m.ndim
            f_hi[axis] = slice(1, n - 1)
            f_lo[axis] = slice(0, n - 2)
            out[tuple(mid)] += (flux[tuple(f_hi)] - flux[tuple(f_lo)]) / (h * h)
    if not grid.periodic_bc:
        ring = np.ones(grid.n, dtype=bool)
        ring[tuple(slice(1, k - 1) for k in grid.n)] = False
        out[ring] = 0.0
    return out


def check_spd(matrix, tol: float = 1e-12) -> np.ndarray:
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    if a.shape[0] != a.shape[1] or not np.allclose(a, a.T, rtol=0.0, atol=tol * max(1.0, np.abs(a).max())):
        raise NonSPDMatrix(f"matrix {a.tolist()} is not symmetric")
    if np.linalg.eigvalsh(a).min() <= 0.0:
        raise NonSPDMatrix(f"matrix {a.tolist()} is not positive definite")
    return a


def div_grad_AH(m: np.ndarray, grid: Grid, AH, order: int = 2) -> np.ndarray:
    """``sum_rs AH[r, s] d_r d_s m`` with central stencils of the given order.

    Mixed derivatives compose two first-derivative stencils of matching order.
    """
    AH = check_spd(AH)
    if AH.shape != (grid.dim, grid.dim):
        raise ShapeMismatch(f"AH must be {grid.dim}x{grid.dim}")
    if not grid.periodic_bc:
        raise ValueError("div_grad_AH requires a periodic grid")
    out = np.zeros_like(np.asarray(m, dtype=float))
    for r in range(grid.dim):
        out += AH[r, r] * central_difference(m, grid, r, 2, order)
    for r in range(grid.dim):
        for s in range(r + 1, grid.dim):
            if AH[r, s] != 0.0:
                d_r = central_difference(m, grid, r, 1, order)
                out += 2.0 * AH[r, s] * central_difference(d_r, grid, s, 1, order)
    return out


def laplacian(m: np.ndarray, grid: Grid, order: int = 2) -> np.ndarray:
    out = np.zeros_like(np.asarray(m, dtype=float))
    for r in range(grid.dim):
        out += 1.0 * central_difference(m, grid, r, 2, order)
    return out


def exchange_energy(a_half, m: np.ndarray, grid: Grid) -> float:
    """Discrete exchange energy ``1/2 sum a_{i+1/2} |D+ m|^2 h^d`` on a periodic grid."""
    total = 0.0
    for axis, (a, h) in enumerate(zip(a_half, grid.spacing)):
        diff = (np.roll(m, -1, axis=axis) - m) / h
        total += 0.5 * float(np.sum(a * np.einsum("...i,...i->...", diff, diff)))
    return total * grid.cell_volume


def max_gradient(m: np.ndarray, grid: Grid) -> float:
    """Largest nodal forward-difference gradient magnitude (periodic grids)."""
    worst = 0.0
    for axis, h in enumerate(grid.spacing):
        diff = (np.roll(m, -1, axis=axis) - m) / h
        worst = max(worst, float(np.max(np.linalg.norm(diff, axis=-1))))
    return worst
