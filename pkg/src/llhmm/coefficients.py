"""Material coefficients, the periodic cell problem and homogenized matrices."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg
from scipy.stats import qmc

from . import expr
from .errors import ConfigError, NonPositiveCoefficient, SolverDivergence

TWO_PI = 2.0 * np.pi


def _ex1(x, eps):
    return 1.0 + 0.5 * np.sin(2.0 * np.pi * x[..., 0] / eps)


def _ex2(x, eps):
    x1, x2 = x[..., 0], x[..., 1]
    return (0.5 + (0.5 + 0.25 * np.sin(2.0 * np.pi * x1 / eps))
            * (0.5 + 0.25 * np.sin(2.0 * np.pi * x2 / eps))
            + 0.25 * (np.cos(2.0 * np.pi * (x1 - x2) / eps) + np.sin(2.0 * np.pi * x1 / eps)))


def _ex3(x, eps):
    return ((1.1 + 0.5 * np.sin(2.0 * np.pi * x[..., 0] / eps))
            * (1.1 + 0.5 * np.sin(2.0 * np.pi * x[..., 1] / eps)))


def _loc1d(x, eps):
    x1 = x[..., 0]
    return 1.1 + 0.25 * np.sin(2.0 * np.pi * x1 + 1.1) + 0.5 * np.sin(2.0 * np.pi * x1 / eps)


def _quasi2d(x, eps):
    x1, x2 = x[..., 0], x[..., 1]
    return ((1.0 + 0.25 * np.sin(2.0 * np.pi * x1 / eps))
            * (1.0 + 0.25 * np.sin(2.0 * np.pi * x2 / eps)
               + 0.25 * np.sin(2.0 * np.pi * 1.41 * x2 / eps)))


def _loc2d(x, eps):
    x1, x2 = x[..., 0], x[..., 1]
    return 0.25 * np.exp(-np.cos(2.0 * np.pi * (x1 + x2) / eps)
                         + np.sin(2.0 * np.pi * x1 / eps) * np.cos(2.0 * np.pi * x2))


@dataclass(frozen=True)
class Preset:
    name: str
    dim: int
    func: object
    text: str
    periodic: bool


PRESETS = {
    p.name: p
    for p in [
        Preset("EX1", 1, _ex1, "1 + 0.5*sin(2*pi*x1/eps)", True),
        Preset("EX2", 2, _ex2,
               "0.5 + (0.5 + 0.25*sin(2*pi*x1/eps))*(0.5 + 0.25*sin(2*pi*x2/eps))"
               " + 0.25*(cos(2*pi*(x1 - x2)/eps) + sin(2*pi*x1/eps))", True),
        Preset("EX3", 2, _ex3, "(1.1 + 0.5*sin(2*pi*x1/eps))*(1.1 + 0.5*sin(2*pi*x2/eps))", True),
        Preset("LOC1D", 1, _loc1d, "1.1 + 0.25*sin(2*pi*x1 + 1.1) + 0.5*sin(2*pi*x1/eps)", False),
        Preset("QUASI2D", 2, _quasi2d,
               "(1 + 0.25*sin(2*pi*x1/eps))*(1 + 0.25*sin(2*pi*x2/eps) + 0.25*sin(2*pi*1.41*x2/eps))",
               False),
        Preset("LOC2D", 2, _loc2d,
               "0.25*exp(-cos(2*pi*(x1 + x2)/eps) + sin(2*pi*x1/eps)*cos(2*pi*x2))", False),
    ]
}


class Coefficient:
    """Scalar material coefficient ``a^eps(x)`` on the unit domain.

    Evaluate with an array of points of shape ``(..., dim)``. For periodic
    coefficients ``a^eps(x) = a(x/eps)`` and :meth:`cell` gives ``a(y)``.
    """

    def __init__(self, func, eps: float, dim: int, name: str | None = None,
                 text: str | None = None, periodic: bool = False):
        if not 0.0 < eps < 1.0:
            raise ConfigError(f"eps must lie in (0, 1), got {eps}")
        self.func = func
        self.eps = float(eps)
        self.dim = int(dim)
        self.name = name
        self.text = text
        self.periodic = periodic

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"points must have trailing dimension {self.dim}")
        return np.broadcast_to(self.func(x, self.eps), x.shape[:-1]).astype(float)

    def cell(self, y) -> np.ndarray:
        """Unit-cell coefficient ``a(y) = a^eps(eps * y)``."""
        return self(self.eps * np.asarray(y, dtype=float))

    def with_eps(self, eps: float) -> "Coefficient":
        return Coefficient(self.func, eps, self.dim, self.name, self.text, self.periodic)

    @cached_property
    def bounds(self) -> tuple[float, float]:
        """(a_min, a_max) from 2**14 scrambled Sobol samples of the unit domain."""
        pts = qmc.Sobol(d=self.dim, scramble=True, seed=12345).random_base2(14)
        if self.periodic:
            vals = self.cell(pts)
        else:
            vals = self(pts)
        a_min, a_max = float(vals.min()), float(vals.max())
        if a_min <= 0.0:
            raise NonPositiveCoefficient(f"coefficient {self.label} reaches {a_min:.3e}")
        return a_min, a_max

    @property
    def label(self) -> str:
        return self.name or self.text or "coefficient"

    def __repr__(self):
        return f"Coefficient({self.label!r}, eps={self.eps:g}, dim={self.dim})"


def preset(name: str, eps: float) -> Coefficient:
    try:
        p = PRESETS[name.upper()]
    except KeyError:
        raise ConfigError(f"unknown coefficient preset {name!r}; known: {sorted(PRESETS)}") from None
    return Coefficient(p.func, eps, p.dim, name=p.name, text=p.text, periodic=p.periodic)


def parse_coefficient(text: str, eps: float, dim: int | None = None,
                      periodic: bool = False) -> Coefficient:
    """Build a coefficient from a preset name or an expression in x1..x3, eps."""
    key = text.strip().upper()
    if key in PRESETS:
        return preset(key, eps)
    tree = expr.parse(text, dim=3 if dim is None else dim)
    used = expr.variables_used(tree)
    if dim is None:
        dim = max([int(v[1:]) for v in used if v.startswith("x")], default=1)

    def func(x, eps_):
        env = {f"x{i + 1}": x[..., i] for i in range(dim)}
        env["eps"] = eps_
        return expr.evaluate(tree, env)

    coef = Coefficient(func, eps, dim, text=text.strip(), periodic=periodic)
    coef.bounds  # positivity check (A1)
    return coef


def constant(value: float, dim: int, eps: float = 0.5) -> Coefficient:
    return Coefficient(lambda x, e: np.full(x.shape[:-1], float(value)), eps, dim,
                       text=repr(float(value)), periodic=True)


# ---------------------------------------------------------------- cell problem


def _cell_half_points(cell_func, n: int, dim: int) -> list[np.ndarray]:
    h = 1.0 / n
    axes = np.meshgrid(*[np.arange(n) * h] * dim, indexing="ij")
    y = np.stack(axes, axis=-1)
    out = []
    for axis in range(dim):
        shifted = y.copy()
        shifted[..., axis] += 0.5 * h
        out.append(np.asarray(cell_func(shifted), dtype=float))
    return out


def _cell_operator(a_half, n, dim):
    """Matrix-free ``-div(a grad .)`` on the periodic unit cell (PSD)."""
    h2 = (1.0 / n) ** 2
    shape = (n,) * dim
    diag = sum(a + np.roll(a, 1, axis=ax) for ax, a in enumerate(a_half)) / h2

    def matvec(v):
        u = v.reshape(shape)
        out = np.zeros(shape)
        for ax, a in enumerate(a_half):
            flux = a * (np.roll(u, -1, axis=ax) - u)
            out -= flux - np.roll(flux, 1, axis=ax)
        return out.ravel() / h2

    size = n ** dim
    op = LinearOperator((size, size), matvec=matvec, dtype=float)
    jacobi = LinearOperator((size, size), matvec=lambda v: v / diag.ravel(), dtype=float)
    return op, jacobi


def _cell_func(coefficient):
    return coefficient.cell if isinstance(coefficient, Coefficient) else coefficient


def solve_cell_problem(coefficient, resolution: int, dim: int | None = None,
                       tol: float = 1e-10) -> np.ndarray:
    """Periodic correctors ``chi_r`` with ``div(a grad chi_r) = -d_r a`` and zero mean.

    Returns an array of shape ``(dim,) + (resolution,) * dim``.
    """
    if resolution < 16:
        raise ConfigError("cell problem resolution must be at least 16")
    dim = coefficient.dim if dim is None else dim
    n = resolution
    a_half = _cell_half_points(_cell_func(coefficient), n, dim)
    op, jacobi = _cell_operator(a_half, n, dim)
    chi = np.zeros((dim,) + (n,) * dim)
    for r in range(dim):
        rhs = ((a_half[r] - np.roll(a_half[r], 1, axis=r)) * n).ravel()
        bnorm = np.linalg.norm(rhs)
        if bnorm == 0.0:
            continue
        history = []

        def record(xk, rhs=rhs, history=history):
            history.append(float(np.linalg.norm(rhs - op.matvec(xk)) / bnorm))

        x, info = cg(op, rhs, rtol=tol, atol=0.0, M=jacobi, maxiter=50 * n * dim, callback=record)
        residual = float(np.linalg.norm(rhs - op.matvec(x)) / bnorm)
        if info != 0 or residual > 10 * tol:
            raise SolverDivergence(
                f"cell problem CG did not converge (info={info}, residual={residual:.3e})", history
            )
        x = x.reshape((n,) * dim)
        chi[r] = x - x.mean()
    return chi


@dataclass(frozen=True)
class HomogenizedMatrix:
    matrix: np.ndarray
    source: str

    @property
    def scalar(self) -> float:
        return float(self.matrix[0, 0])


def homogenized_matrix(coefficient, resolution: int, dim: int | None = None) -> HomogenizedMatrix:
    """``A^H = mean over Y of a (I + grad(chi)^T)``, trapezoidal on the cell lattice."""
    dim = coefficient.dim if dim is None else dim
    n = resolution
    chi = solve_cell_problem(coefficient, n, dim)
    a_half = _cell_half_points(_cell_func(coefficient), n, dim)
    A = np.zeros((dim, dim))
    for i in range(dim):
        for j in range(dim):
            grad = (np.roll(chi[j], -1, axis=i) - chi[j]) * n
            A[i, j] = np.mean(a_half[i] * ((i == j) + grad))
    A = 0.5 * (A + A.T)
    return HomogenizedMatrix(A, f"cell-problem(n={n})")


def homogenized_matrix_extrapolated(coefficient, resolution: int = 256,
                                    dim: int | None = None) -> HomogenizedMatrix:
    """Richardson extrapolation of the O(h^2) cell-problem matrix from n and 2n."""
    coarse = homogenized_matrix(coefficient, resolution, dim).matrix
    fine = homogenized_matrix(coefficient, 2 * resolution, dim).matrix
    return HomogenizedMatrix((4.0 * fine - coarse) / 3.0,
                             f"cell-problem-richardson(n={resolution},{2 * resolution})")


def harmonic_mean_1d(cell_func, nodes: int = 4096) -> float:
    """(int_0^1 1/a)^-1 by the periodic trapezoidal rule."""
    y = (np.arange(nodes) / nodes)[:, None]
    return float(1.0 / np.mean(1.0 / cell_func(y)))


def local_average(coefficient: Coefficient, window: float, nodes_per_eps: int = 16) -> Coefficient:
    """Arithmetic mean of ``a^eps`` over the cube ``x + [-window/2, window/2]^d``."""
    if window < coefficient.eps * (1 - 1e-12):
        raise ConfigError("averaging window must be at least eps")
    q = max(8, int(np.ceil(nodes_per_eps * window / coefficient.eps)))
    nodes, weights = np.polynomial.legendre.leggauss(q)
    nodes = 0.5 * window * nodes
    weights = 0.5 * weights
    dim = coefficient.dim
    grids = np.meshgrid(*[nodes] * dim, indexing="ij")
    offsets = np.stack(grids, axis=-1).reshape(-1, dim)
    w = np.prod(np.stack(np.meshgrid(*[weights] * dim, indexing="ij"), axis=-1).reshape(-1, dim), axis=1)
    parent = coefficient

    def func(x, eps_):
        vals = parent(x[..., None, :] + offsets)
        return vals @ w

    return Coefficient(func, coefficient.eps, dim,
                       name=f"avg[{coefficient.label},{window:g}]", periodic=coefficient.periodic)
