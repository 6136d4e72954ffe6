"""HMM macro driver: the field model stepped on a coarse periodic grid.

At every field evaluation each macro node gets a fresh micro problem whose
initial data interpolate the surrounding ``(2k+1)^d`` macro values; the
upscaled ``H_avg`` of all nodes forms the macro field lattice.
"""

from __future__ import annotations

import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import grid as fd
from ._fast import heun_average
from .coefficients import Coefficient
from .errors import ConfigError, ExtrapolationRequested, LLHMMError
from .integrators import FieldProvider, check_method, integrate, linear_dt_limit
from .micro import (
    MicroSetup,
    _averaging_weights,
    lagrange_matrix,
    macro_stencil,
    normalize_initial_data,
)
from .reference import Trajectory


@dataclass
class HmmConfig:
    macro_grid: fd.Grid
    coefficient: Coefficient
    micro: MicroSetup
    alpha_macro: float = 0.01
    T: float = 0.1
    dt_macro: float | None = None
    integrator: str = "mpea"
    # scale of the macro field operator used in the stability bound;
    # defaults to the coefficient maximum, which bounds A^H from above
    field_scale: float | None = None
    safety: float = 0.9
    workers: int = 1

    def __post_init__(self):
        self.integrator = check_method(self.integrator)
        if self.integrator == "imp":
            raise ConfigError("implicit macro stepping is not supported for HMM")
        g = self.macro_grid
        if not g.periodic_bc:
            raise ConfigError("the macro grid must be periodic")
        if g.dim != self.coefficient.dim:
            raise ConfigError("macro grid and coefficient dimensions differ")
        if any(2 * self.micro.k + 1 > n for n in g.n):
            raise ConfigError(f"interpolation stencil of {2 * self.micro.k + 1} nodes does not fit {g.n}")
        if self.micro.half_nodes * self.micro.dx > self.micro.k * min(g.spacing) * (1 + 1e-12):
            raise ExtrapolationRequested(
                f"micro box half-width {self.micro.half_nodes * self.micro.dx:.4g} exceeds the "
                f"interpolation hull {self.micro.k * min(g.spacing):.4g}"
            )
        if self.T < 0:
            raise ConfigError("final time must be non-negative")
        limit = self.stable_dt()
        if self.dt_macro is None:
            self.dt_macro = limit
        elif self.dt_macro > limit * (1 + 1e-12):
            raise ConfigError(f"dt_macro={self.dt_macro:.3e} exceeds the stability bound {limit:.3e}")

    @property
    def scale(self) -> float:
        return self.coefficient.bounds[1] if self.field_scale is None else self.field_scale

    def stable_dt(self) -> float:
        dx = min(self.macro_grid.spacing)
        return self.safety * linear_dt_limit(self.integrator, self.alpha_macro, self.scale,
                                             self.macro_grid.dim, dx, self.micro.interp_order)


@dataclass
class MicroPlan:
    """Per-node quantities that do not depend on the macro state."""

    setup: MicroSetup
    spacing: float
    centers: np.ndarray
    a_half: list
    interp: np.ndarray
    dt: float
    n_steps: int
    wx: np.ndarray
    wt: np.ndarray

    @classmethod
    def build(cls, config: HmmConfig) -> "MicroPlan":
        setup, g = config.micro, config.macro_grid
        dim = g.dim
        spacing = g.spacing[0]
        if any(abs(h - spacing) > 1e-12 for h in g.spacing):
            raise ConfigError("HMM requires equal macro spacing on all axes")
        centers = g.coords().reshape(-1, dim)
        a_max = config.coefficient.bounds[1]
        a_half = []
        for c in centers:
            a_half.append(fd.half_point_coefficients(config.coefficient, setup.box(c, dim)))
        offsets = setup.dx * np.arange(-setup.half_nodes, setup.half_nodes + 1)
        interp = lagrange_matrix(offsets, spacing, setup.k)
        dt, n_steps = setup.time_step(a_max, dim)
        wx, wt = _averaging_weights(setup, dim, n_steps, dt)
        return cls(setup, spacing, centers, a_half, interp, dt, n_steps, wx, wt)

    def solve_node(self, node: int, stencil: np.ndarray) -> np.ndarray:
        P = stencil
        for axis in range(stencil.ndim - 1):
            P = np.moveaxis(np.tensordot(self.interp, P, axes=(1, axis)), 0, axis)
        m0 = normalize_initial_data(P)
        h, _ = heun_average(m0, self.a_half[node], self.dt, self.n_steps, self.setup.alpha_micro,
                            self.wx, self.wt, self.setup.dx)
        return h


_WORKER_PLAN: MicroPlan | None = None


def _init_worker(plan):
    global _WORKER_PLAN
    _WORKER_PLAN = plan


def _solve_chunk(args):
    nodes, stencils = args
    return [_WORKER_PLAN.solve_node(n, s) for n, s in zip(nodes, stencils)]


class HmmFieldProvider(FieldProvider):
    """Field provider backed by one micro problem per macro node."""

    def __init__(self, config: HmmConfig, workers: int | None = None):
        self.config = config
        self.plan = MicroPlan.build(config)
        self.workers = config.workers if workers is None else workers
        self.tag = "hmm-upscaled"
        self.micro_solves = 0
        self.micro_seconds = 0.0
        self._pool = None
        super().__init__(self._evaluate, self.tag)

    def _evaluate(self, m: np.ndarray, t: float) -> np.ndarray:
        g = self.config.macro_grid
        k = self.config.micro.k
        idx = list(np.ndindex(*g.n))
        stencils = [macro_stencil(m, i, k) for i in idx]
        start = time.perf_counter()
        if self.workers <= 1:
            out = []
            for node, s in enumerate(stencils):
                try:
                    out.append(self.plan.solve_node(node, s))
                except LLHMMError as exc:
                    raise type(exc)(f"macro node {idx[node]}: {exc}") from exc
        else:
            pool = self._get_pool()
            chunks = np.array_split(np.arange(len(idx)), self.workers * 4)
            tasks = [(list(c), [stencils[i] for i in c]) for c in chunks if len(c)]
            out = [h for part in pool.map(_solve_chunk, tasks) for h in part]
        self.micro_seconds += time.perf_counter() - start
        self.micro_solves += len(idx)
        return np.array(out).reshape(m.shape)

    def _get_pool(self):
        if self._pool is None:
            ctx = multiprocessing.get_context("fork")
            self._pool = ProcessPoolExecutor(self.workers, mp_context=ctx,
                                             initializer=_init_worker, initargs=(self.plan,))
        return self._pool

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None


def hmm_field_provider(config: HmmConfig, workers: int | None = None) -> HmmFieldProvider:
    return HmmFieldProvider(config, workers)


def run_hmm(config: HmmConfig, initial: np.ndarray, output_times=None, provider=None) -> Trajectory:
    """Integrate the HMM macro model from ``initial`` to ``config.T``."""
    initial = np.asarray(initial, dtype=float)
    if initial.shape != config.macro_grid.n + (3,):
        raise ConfigError(f"initial data shape {initial.shape} does not match macro grid")
    own = provider is None
    provider = hmm_field_provider(config) if own else provider
    start = time.perf_counter()
    try:
        times, fields = integrate(initial, provider, config.alpha_macro, config.dt_macro, config.T,
                                  config.integrator, output_times)
    finally:
        if own:
            provider.close()
    stats = {"wall_seconds": time.perf_counter() - start, "dt_macro": config.dt_macro}
    if isinstance(provider, HmmFieldProvider):
        stats.update(micro_solves=provider.micro_solves, micro_seconds=provider.micro_seconds)
    return Trajectory(config.macro_grid, times, fields, stats)
