"""Micro problems: interpolated initial data, boxed solve and upscaling.

A micro problem around macro node ``x_k`` is posed on the box
``x_k + [-mu', mu']^d`` with spacing ``dx = eps / K``. Its initial data is
the normalized tensor Lagrange interpolant of the surrounding macro stencil;
the outermost ring of nodes is frozen at the initial data. The problem is
advanced with HeunP over ``[0, eta]`` and the exchange field is averaged with
``K_mu`` in space and ``K^0_eta`` in time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import grid as fd
from .errors import (
    ConfigError,
    ExtrapolationRequested,
    InstabilityDetected,
    NoReferenceAvailable,
    VanishingInterpolant,
)
from .integrators import heun_dt_factor, llg_rhs
from .kernels import Kernel, construct_kernel, spatial_weights, temporal_weights


@lru_cache(maxsize=None)
def cached_kernel(p: int, q: int, one_sided: bool) -> Kernel:
    return construct_kernel(p, q, one_sided)


@dataclass(frozen=True)
class MicroSetup:
    """Micro-problem parameters; lengths and times in absolute units."""

    eps: float
    mu: float
    mu_prime: float
    eta: float
    alpha_micro: float = 1.2
    points_per_eps: int = 15
    interp_order: int = 4
    kernel_space: tuple = (3, 7)
    kernel_time: tuple = (3, 7)
    dt_factor: float | None = None
    safety: float = 0.8

    def __post_init__(self):
        if not (0 < self.mu <= self.mu_prime):
            raise ConfigError(f"need 0 < mu <= mu' (mu={self.mu}, mu'={self.mu_prime})")
        if self.eta <= 0 or self.eps <= 0:
            raise ConfigError("eta and eps must be positive")
        if self.interp_order not in (2, 4) :
            raise ConfigError(f"interpolation order must be 2 or 4, got {self.interp_order}")
        if self.points_per_eps < 8:
            raise ConfigError("points_per_eps must be at least 8")
        if self.alpha_micro <= 0:
            raise ConfigError("alpha_micro must be positive")

    @classmethod
    def scaled(cls, eps, mu=3.9, mu_prime=10.0, eta=1.0, **kwargs) -> "MicroSetup":
        """Setup with ``mu``, ``mu_prime`` in units of eps and ``eta`` in units of eps^2."""
        return cls(eps=eps, mu=mu * eps, mu_prime=mu_prime * eps, eta=eta * eps * eps, **kwargs)

    def with_eps(self, eps) -> "MicroSetup":
        r = eps / self.eps
        return MicroSetup(eps, self.mu * r, self.mu_prime * r, self.eta * r * r, self.alpha_micro,
                          self.points_per_eps, self.interp_order, self.kernel_space,
                          self.kernel_time, self.dt_factor, self.safety)

    @property
    def dx(self) -> float:
        return self.eps / self.points_per_eps

    @property
    def half_nodes(self) -> int:
        return int(np.ceil(self.mu_prime / self.dx - 1e-9))

    @property
    def k(self) -> int:
        return self.interp_order // 2

    @property
    def spatial_kernel(self) -> Kernel:
        return cached_kernel(*self.kernel_space, False)

    @property
    def temporal_kernel(self) -> Kernel:
        return cached_kernel(*self.kernel_time, True)

    def time_step(self, a_max: float, dim: int) -> tuple[float, int]:
        """``(dt, n_steps)`` with ``dt = eta / ceil(eta / dt_max)``."""
        c = self.dt_factor
        if c is None:
            c = heun_dt_factor(a_max, dim, self.alpha_micro, self.safety)
        dt_max = c * self.dx**2
        n = int(np.ceil(self.eta / dt_max - 1e-9))
        return self.eta / n, n

    def box(self, center, dim: int) -> fd.Grid:
        return fd.Grid.box(self.half_nodes, self.dx, dim, center)


@dataclass
class MicroResult:
    h_avg: np.ndarray
    diagnostics: dict = field(default_factory=dict)


# -- initial data ---------------------------------------------------------------

@lru_cache(maxsize=None)
def _lagrange_coefficients(k: int) -> np.ndarray:
    """Monomial coefficients (column i) of the Lagrange basis on nodes -k..k."""
    nodes = np.arange(-k, k + 1, dtype=float)
    V = np.vander(nodes, increasing=True)
    return np.linalg.inv(V)


def lagrange_matrix(points, spacing: float, k: int, derivative: int = 0) -> np.ndarray:
    """Rows: basis functions (or their derivatives) of the ``2k+1`` node stencil
    with spacing ``spacing`` evaluated at 1D ``points``."""
    xi = np.atleast_1d(np.asarray(points, dtype=float)) / spacing
    if np.any(np.abs(xi) > k * (1 + 1e-12)):
        raise ExtrapolationRequested(
            f"query point at {np.abs(xi).max() * spacing:.4g} outside stencil hull {k * spacing:.4g}"
        )
    C = _lagrange_coefficients(k)
    powers = np.arange(2 * k + 1)
    if derivative == 0:
        X = xi[:, None] ** powers
    else:
        fac = np.ones_like(powers, dtype=float)
        for j in range(derivative):
            fac = fac * np.maximum(powers - j, 0)
        X = fac * xi[:, None] ** np.maximum(powers - derivative, 0)
        X = X / spacing**derivative
    return X @ C


def interpolate_tensor(stencil: np.ndarray, spacing: float, axis_points, derivatives=None):
    """Tensor-product interpolant of a ``(2k+1)^d x 3`` stencil on the grid spanned by ``axis_points``."""
    stencil = np.asarray(stencil, dtype=float)
    d = stencil.ndim - 1
    k = (stencil.shape[0] - 1) // 2
    derivatives = derivatives or (0,) * d
    out = stencil
    for axis in range(d):
        L = lagrange_matrix(axis_points[axis], spacing, k, derivatives[axis])
        out = np.tensordot(L, out, axes=(1, axis))
        out = np.moveaxis(out, 0, axis)
    return out


def interpolate_polynomial(stencil: np.ndarray, spacing: float, query_points) -> np.ndarray:
    """Componentwise tensor Lagrange interpolant ``P`` at scattered points.

    ``stencil[i_1, ..., i_d]`` holds the macro value at offset
    ``(i_1 - k, ..., i_d - k) * spacing``; ``query_points`` have shape ``(..., d)``
    relative to the stencil centre.
    """
    stencil = np.asarray(stencil, dtype=float)
    d = stencil.ndim - 1
    k = (stencil.shape[0] - 1) // 2
    q = np.asarray(query_points, dtype=float)
    if d == 1 and (q.ndim == 0 or q.shape[-1] != 1):
        q = q[..., None]
    flat = q.reshape(-1, d)
    weights = [lagrange_matrix(flat[:, a], spacing, k) for a in range(d)]
    if d == 1:
        out = weights[0] @ stencil
    elif d == 2:
        out = np.einsum("pi,pj,ijc->pc", weights[0], weights[1], stencil)
    else:
        out = np.einsum("pi,pj,pl,ijlc->pc", weights[0], weights[1], weights[2], stencil)
    return out.reshape(q.shape[:-1] + (3,))


def normalize_initial_data(P: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    norms = np.linalg.norm(P, axis=-1, keepdims=True)
    if np.any(norms < tol):
        raise VanishingInterpolant(f"interpolant norm {norms.min():.3e} below {tol:g}")
    return P / norms


def centre_derivatives(stencil: np.ndarray, spacing: float, normalized: bool = True):
    """Value, gradient and Hessian at the stencil centre of ``Q`` (or ``P``).

    Shapes: ``(3,)``, ``(d, 3)``, ``(d, d, 3)``.
    """
    from .problems import unit_derivatives

    stencil = np.asarray(stencil, dtype=float)
    d = stencil.ndim - 1
    zero = [np.zeros(1)] * d

    def deriv(orders):
        return interpolate_tensor(stencil, spacing, zero, orders).reshape(3)

    P = deriv((0,) * d)
    dP = np.zeros((d, 3))
    ddP = np.zeros((d, d, 3))
    for r in range(d):
        e = [0] * d
        e[r] = 1
        dP[r] = deriv(tuple(e))
        for s in range(d):
            f = list(e)
            f[s] += 1
            ddP[r, s] = deriv(tuple(f))
    if not normalized:
        return P, dP, ddP
    return unit_derivatives(P, dP, ddP)


def macro_stencil(values: np.ndarray, index, k: int) -> np.ndarray:
    """``(2k+1)^d`` neighbourhood of a node in a periodic macro lattice."""
    d = values.ndim - 1
    if any(2 * k + 1 > n for n in values.shape[:d]):
        raise ConfigError(f"stencil of {2 * k + 1} nodes does not fit macro grid {values.shape[:d]}")
    out = values
    for axis in range(d):
        idx = (np.arange(-k, k + 1) + index[axis]) % values.shape[axis]
        out = np.take(out, idx, axis=axis)
    return out


def micro_initial_data(stencil, spacing, setup: MicroSetup, normalized: bool = True):
    d = np.asarray(stencil).ndim - 1
    offsets = setup.dx * np.arange(-setup.half_nodes, setup.half_nodes + 1)
    P = interpolate_tensor(stencil, spacing, [offsets] * d)
    return normalize_initial_data(P) if normalized else P


# -- solve and upscale ---------------------------------------------------------

def _averaging_weights(setup: MicroSetup, dim: int, n_steps: int, dt: float):
    offsets = setup.dx * np.arange(-setup.half_nodes, setup.half_nodes + 1)
    wx = spatial_weights(setup.spatial_kernel, setup.mu, offsets)
    wt = temporal_weights(setup.temporal_kernel, setup.eta, dt * np.arange(n_steps + 1))
    return wx, wt


def _box_slice(setup: MicroSetup, dim: int):
    j = int(np.ceil(setup.mu / setup.dx - 1e-9))
    c = setup.half_nodes
    return tuple(slice(c - j, c + j + 1) for _ in range(dim))


def solve_micro(initial: np.ndarray, coefficient, setup: MicroSetup, center=0.0,
                a_max: float | None = None, record: str = "field"):
    """HeunP solve of the boxed micro problem (numpy reference path).

    Returns ``(times, fields)`` where ``fields[n]`` is ``div(a grad m)`` at
    time ``times[n]`` restricted to the averaging box ``[-mu, mu]^d``.
    With ``record="m"`` the magnetization on that box is stored instead.
    """
    if record not in ("field", "m"):
        raise ConfigError(f"record must be 'field' or 'm', got {record!r}")
    initial = np.asarray(initial, dtype=float)
    dim = initial.ndim - 1
    grid = setup.box(center, dim)
    if initial.shape != grid.n + (3,):
        raise ConfigError(f"initial data shape {initial.shape} does not match micro box {grid.n}")
    a_half = fd.half_point_coefficients(coefficient, grid)
    a_max = coefficient.bounds[1] if a_max is None else a_max
    dt, n_steps = setup.time_step(a_max, dim)
    box = _box_slice(setup, dim)
    alpha = setup.alpha_micro
    m = initial.copy()
    fields = []
    for n in range(n_steps + 1):
        H1 = fd.div_a_grad(a_half, m, grid)
        fields.append((H1 if record == "field" else m)[box].copy())
        if n == n_steps:
            break
        k1 = llg_rhs(m, H1, alpha)
        m2 = m + dt * k1
        k2 = llg_rhs(m2, fd.div_a_grad(a_half, m2, grid), alpha)
        m = fd.normalize(m + 0.5 * dt * (k1 + k2))
        if not np.all(np.isfinite(m)):
            raise InstabilityDetected(f"micro solve blew up at step {n + 1}", step=n + 1)
    return dt * np.arange(n_steps + 1), np.array(fields)


def upscale(times, fields, setup: MicroSetup) -> MicroResult:
    """Space-time kernel average of the stored field lattices."""
    fields = np.asarray(fields, dtype=float)
    dim = fields.ndim - 2
    j = (fields.shape[1] - 1) // 2
    offsets = setup.dx * np.arange(-j, j + 1)
    wt = temporal_weights(setup.temporal_kernel, setup.eta, times)
    wx = spatial_weights(setup.spatial_kernel, setup.mu, offsets)
    out = np.tensordot(wt, fields, axes=(0, 0))
    for _ in range(dim):
        out = np.tensordot(wx, out, axes=(0, 0))
    return MicroResult(out, {"steps": len(times) - 1, "dt": float(times[1] - times[0])})


def solve_and_upscale(stencil, spacing, center, coefficient, setup: MicroSetup, fast: bool = True,
                      a_max: float | None = None) -> MicroResult:
    """Full micro-problem pipeline for one macro node."""
    stencil = np.asarray(stencil, dtype=float)
    dim = stencil.ndim - 1
    if setup.half_nodes * setup.dx > setup.k * spacing * (1 + 1e-12):
        raise ExtrapolationRequested(
            f"micro box half-width {setup.half_nodes * setup.dx:.4g} exceeds stencil hull {setup.k * spacing:.4g}"
        )
    m0 = micro_initial_data(stencil, spacing, setup)
    a_max = coefficient.bounds[1] if a_max is None else a_max
    if not fast:
        times, fields = solve_micro(m0, coefficient, setup, center, a_max)
        return upscale(times, fields, setup)
    from ._fast import heun_average

    grid = setup.box(center, dim)
    a_half = fd.half_point_coefficients(coefficient, grid)
    dt, n_steps = setup.time_step(a_max, dim)
    wx, wt = _averaging_weights(setup, dim, n_steps, dt)
    h, drift = heun_average(m0, a_half, dt, n_steps, setup.alpha_micro, wx, wt, setup.dx)
    if not np.all(np.isfinite(h)):
        raise InstabilityDetected("micro solve produced a non-finite average", step=n_steps)
    return MicroResult(h, {"steps": n_steps, "dt": dt, "norm_drift": drift})


# -- diagnostics -----------------------------------------------------------------

@dataclass
class ErrorSplit:
    e_approx: float
    e_avg: float
    e_disc: float
    h_avg: np.ndarray


def error_decomposition(macro_point, macro_data, spacing: float, setup: MicroSetup, coefficient,
                        AH, normalized: bool = True, h_avg=None, fast: bool = True) -> ErrorSplit:
    """``E_approx``, ``E_avg`` and ``E_disc`` at one macro point.

    ``macro_data`` must provide analytic derivatives (``value`` and
    ``derivatives``), as the smooth initial data in :mod:`llhmm.problems` do.
    Passing ``h_avg`` skips the micro solve and uses that value instead.
    """
    if AH is None or not hasattr(macro_data, "derivatives"):
        raise NoReferenceAvailable("error split needs A^H and analytic macro derivatives")
    AH = np.atleast_2d(np.asarray(AH, dtype=float))
    x0 = np.atleast_1d(np.asarray(macro_point, dtype=float))
    d = len(x0)
    k = setup.k
    ax = np.arange(-k, k + 1) * spacing
    nodes = np.stack(np.meshgrid(*[ax] * d, indexing="ij"), axis=-1) + x0
    stencil = macro_data.value(nodes)
    _, _, ddQ = centre_derivatives(stencil, spacing, normalized)
    _, _, ddM = macro_data.derivatives(x0)
    target_q = np.einsum("rs,rsk->k", AH, ddQ)
    target_m = np.einsum("rs,rsk->k", AH, ddM.reshape(d, d, 3))
    if h_avg is None:
        h_avg = solve_and_upscale(stencil, spacing, x0, coefficient, setup, fast).h_avg
    h_avg = np.asarray(h_avg, dtype=float)
    return ErrorSplit(
        e_approx=float(np.linalg.norm(h_avg - target_m)),
        e_avg=float(np.linalg.norm(h_avg - target_q)),
        e_disc=float(np.linalg.norm(target_q - target_m)),
        h_avg=h_avg,
    )
