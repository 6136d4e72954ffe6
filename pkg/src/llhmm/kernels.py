"""Polynomial smoothing kernels with vanishing moments and space-time averaging.

A symmetric kernel in K^{p,q} is ``(1 - x^2)^(q+1) * sum_i c_i T_{2i}(x)`` on
[-1, 1]; a one-sided kernel in K_0^{p,q} is
``(x (1 - x))^(q+1) * sum_i c_i T_i(2x - 1)`` on [0, 1]. The weight makes the
kernel and its first q derivatives vanish at the support ends, and the
Chebyshev coefficients solve the moment conditions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial import chebyshev as C

from .errors import AveragingBoxExceedsData, ConfigError, IllConditionedSystem

MAX_ORDER = 12


def _gauss(lo, hi, n=96):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * w


@dataclass(frozen=True)
class Kernel:
    p: int
    q: int
    one_sided: bool
    coeffs: np.ndarray = field(repr=False)
    moment_certificate: np.ndarray = field(default=None, repr=False)

    @property
    def support(self) -> tuple[float, float]:
        return (0.0, 1.0) if self.one_sided else (-1.0, 1.0)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.one_sided:
            inside = (x > 0.0) & (x < 1.0)
            xc = np.where(inside, x, 0.5)
            vals = (xc * (1.0 - xc)) ** (self.q + 1) * C.chebval(2.0 * xc - 1.0, self.coeffs)
        else:
            inside = np.abs(x) < 1.0
            xc = np.where(inside, x, 0.0)
            vals = (1.0 - xc * xc) ** (self.q + 1) * C.chebval(xc, self.coeffs)
        return np.where(inside, vals, 0.0)

    def scaled(self, scale: float, x) -> np.ndarray:
        """``K_scale(x) = K(x / scale) / scale``; tensor product over a trailing axis."""
        if scale <= 0:
            raise ConfigError("kernel scale must be positive")
        return self(np.asarray(x, dtype=float) / scale) / scale

    def moments(self, r_max: int | None = None, nodes: int | None = None) -> np.ndarray:
        """Moments 0..r_max.

        By default a 128-point Gauss-Legendre rule, exact for these polynomial
        kernels; with ``nodes`` set, the composite trapezoidal rule instead.
        """
        r_max = self.p if r_max is None else r_max
        lo, hi = self.support
        if nodes is None:
            x, w = _gauss(lo, hi, 128)
        else:
            x = np.linspace(lo, hi, nodes)
            w = np.full(nodes, (hi - lo) / (nodes - 1))
            w[[0, -1]] *= 0.5
        k = self(x)
        return np.array([np.sum(w * k * x**r) for r in range(r_max + 1)])


def construct_kernel(p: int, q: int, one_sided: bool = False) -> Kernel:
    """Kernel with ``p`` vanishing moments and ``q`` continuous derivatives."""
    if not (0 <= p <= MAX_ORDER and 0 <= q <= MAX_ORDER):
        raise ConfigError(f"kernel orders must lie in 0..{MAX_ORDER}, got p={p}, q={q}")
    if one_sided:
        x, w = _gauss(0.0, 1.0)
        weight = (x * (1.0 - x)) ** (q + 1)
        basis = [C.chebval(2.0 * x - 1.0, np.eye(p + 1)[i]) for i in range(p + 1)]
        powers = list(range(p + 1))
    else:
        x, w = _gauss(-1.0, 1.0)
        weight = (1.0 - x * x) ** (q + 1)
        m = p // 2 + 1
        basis = [C.chebval(x, np.eye(2 * m - 1)[2 * i]) for i in range(m)]
        powers = [2 * i for i in range(m)]
    system = np.array([[np.sum(w * weight * b * x**r) for b in basis] for r in powers])
    cond = np.linalg.cond(system)
    if not np.isfinite(cond) or cond > 1e12:
        raise IllConditionedSystem(f"moment system condition number {cond:.3e}")
    rhs = np.zeros(len(powers))
    rhs[0] = 1.0
    sol = np.linalg.solve(system, rhs)
    if one_sided:
        coeffs = sol
    else:
        coeffs = np.zeros(2 * len(sol) - 1)
        coeffs[::2] = sol
    kernel = Kernel(p, q, one_sided, coeffs)
    return Kernel(p, q, one_sided, coeffs, kernel.moments())


def scaled_eval(kernel: Kernel, scale: float, x) -> np.ndarray:
    """Scaled kernel density; for points of shape ``(..., d)`` use ``d > 1`` tensor form."""
    x = np.asarray(x, dtype=float)
    return kernel.scaled(scale, x)


def scaled_eval_nd(kernel: Kernel, scale: float, x) -> np.ndarray:
    """``K_scale(x_1) ... K_scale(x_d)`` for points of shape ``(..., d)``."""
    return np.prod(kernel.scaled(scale, x), axis=-1)


def trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=float)
    w = np.zeros_like(nodes)
    d = np.diff(nodes)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def spatial_weights(kernel: Kernel, mu: float, axis_nodes: np.ndarray) -> np.ndarray:
    """Quadrature weights ``K_mu(x_j) * trapezoid_j`` along one axis."""
    axis_nodes = np.asarray(axis_nodes, dtype=float)
    tol = 1e-9 * mu
    if axis_nodes[0] > -mu + tol or axis_nodes[-1] < mu - tol:
        raise AveragingBoxExceedsData(
            f"nodes [{axis_nodes[0]:.4g}, {axis_nodes[-1]:.4g}] do not cover [-{mu:.4g}, {mu:.4g}]"
        )
    return kernel.scaled(mu, axis_nodes) * trapezoid_weights(axis_nodes)


def temporal_weights(kernel: Kernel, eta: float, times: np.ndarray) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    tol = 1e-9 * eta
    if times[0] > tol or times[-1] < eta - tol:
        raise AveragingBoxExceedsData(
            f"times [{times[0]:.4g}, {times[-1]:.4g}] do not cover [0, {eta:.4g}]"
        )
    return kernel.scaled(eta, times) * trapezoid_weights(times)


def space_time_average(samples, axis_nodes, times, spatial: Kernel, temporal: Kernel,
                       mu: float, eta: float) -> np.ndarray:
    """Kernel-weighted space-time average of a sampled trajectory.

    ``samples`` has shape ``(len(times), n_1, ..., n_d, 3)`` (or without the
    trailing component axis); ``axis_nodes`` lists the node coordinates per
    spatial axis, relative to the averaging centre.
    """
    samples = np.asarray(samples, dtype=float)
    if eta <= 0:
        raise ConfigError("eta must be positive")
    wt = temporal_weights(temporal, eta, times)
    out = np.tensordot(wt, samples, axes=(0, 0))
    for nodes in axis_nodes:
        out = np.tensordot(spatial_weights(spatial, mu, nodes), out, axes=(0, 0))
    return out


def dump_kernel(kernel: Kernel, path) -> None:
    """Write a kernel as plain text: header line ``p q one_sided`` then ``index coeff`` rows."""
    lines = ["# llhmm kernel v1", "# p q one_sided", f"{kernel.p} {kernel.q} {int(kernel.one_sided)}",
             "# chebyshev_index coefficient"]
    lines += [f"{i} {c:.17e}" for i, c in enumerate(kernel.coeffs)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_kernel(path) -> Kernel:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    p, q, one_sided = (int(v) for v in rows[0])
    coeffs = np.array([float(r[1]) for r in sorted(rows[1:], key=lambda r: int(r[0]))])
    kernel = Kernel(p, q, bool(one_sided), coeffs)
    return Kernel(p, q, bool(one_sided), coeffs, kernel.moments())
