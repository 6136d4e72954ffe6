"""Time integrators for Landau-Lifshitz dynamics on lattices.

Every stepper works on vector lattices of shape ``grid.n + (3,)`` and a
field provider ``H = provider(m, t)``. The semi-discrete equation is

    dm/dt = -m x H(m) - alpha m x (m x H(m)) = -m x h(m),   h = H + alpha m x H.

HeunP and RK4P are classical Runge-Kutta steps followed by projection onto
the unit sphere. The implicit midpoint rule, MPE and MPEA all use the
nodewise Cayley update

    (m1 - m0) / dt = -((m0 + m1) / 2) x h,

which is exactly norm preserving; they differ in how ``h`` is chosen.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from . import grid as fd
from .errors import (
    ConfigError,
    FixedPointDivergence,
    InstabilityDetected,
    MissingHistory,
    NoStableStepFound,
    ShapeMismatch,
)

METHODS = ("heunp", "rk4p", "imp", "mpe", "mpea")
EXPLICIT_METHODS = ("heunp", "rk4p", "mpe", "mpea")
# field evaluations per step, used for cost comparisons
STAGES = {"heunp": 2, "rk4p": 4, "mpe": 1, "mpea": 1}
HISTORY = {"mpe": 1, "mpea": 2}
ORDER = {"heunp": 2, "rk4p": 4, "imp": 2, "mpe": 2, "mpea": 2}


@dataclass
class FieldProvider:
    """Effective-field callable ``H = func(m, t)`` with a descriptive tag."""

    func: Callable[[np.ndarray, float], np.ndarray]
    tag: str = "custom"

    def __call__(self, m: np.ndarray, t: float = 0.0) -> np.ndarray:
        H = self.func(m, t)
        if H.shape != m.shape:
            raise ShapeMismatch(f"provider returned shape {H.shape} for input {m.shape}")
        return H


def exchange_provider(coefficient, grid: fd.Grid) -> FieldProvider:
    """``H = div(a grad m)`` with half-point coefficients sampled once."""
    a_half = fd.half_point_coefficients(coefficient, grid)
    return FieldProvider(lambda m, t: fd.div_a_grad(a_half, m, grid), "micro-exchange")


def homogenized_provider(AH, grid: fd.Grid, order: int = 2) -> FieldProvider:
    AH = fd.check_spd(AH)
    return FieldProvider(lambda m, t: fd.div_grad_AH(m, grid, AH, order), "homogenized-exchange")


def zero_provider() -> FieldProvider:
    return FieldProvider(lambda m, t: np.zeros_like(m), "zero")


@dataclass
class IntegratorState:
    m: np.ndarray
    dt: float
    t: float = 0.0
    step_index: int = 0
    # h(m^{j-1}), h(m^{j-2}), most recent first
    history: tuple = field(default_factory=tuple)

    def field(self, grid: fd.Grid) -> fd.MagnetizationField:
        return fd.MagnetizationField(grid, self.m)


def _check_shapes(m, H):
    if np.shape(m) != np.shape(H) or np.shape(m)[-1] != 3:
        raise ShapeMismatch(f"m {np.shape(m)} and H {np.shape(H)} must be matching 3-vector lattices")


def llg_rhs(m: np.ndarray, H: np.ndarray, alpha: float) -> np.ndarray:
    """``-m x H - alpha m x (m x H)`` nodewise."""
    _check_shapes(m, H)
    mxH = np.cross(m, H)
    return -mxH - alpha * np.cross(m, mxH)


def compose_h(m: np.ndarray, H: np.ndarray, alpha: float) -> np.ndarray:
    """``h = H + alpha m x H`` so that ``llg_rhs = -m x h`` for unit ``m``."""
    _check_shapes(m, H)
    if alpha == 0.0:
        return np.array(H, dtype=float, copy=True)
    return H + alpha * np.cross(m, H)


def cayley_update(m0: np.ndarray, h: np.ndarray, dt: float) -> np.ndarray:
    """Solve ``(m1 - m0)/dt = -((m0 + m1)/2) x h`` for ``m1`` nodewise.

    With ``w = -dt/2 h`` this is ``(I + [w]x) m1 = (I - [w]x) m0``; the
    inverse of ``I + [w]x`` has the closed form
    ``b -> (b - w x b + (w.b) w) / (1 + |w|^2)``.
    """
    w = -0.5 * dt * h
    b = m0 - np.cross(w, m0)
    wb = np.einsum("...i,...i->...", w, b)[..., None]
    ww = np.einsum("...i,...i->...", w, w)[..., None]
    return (b - np.cross(w, b) + wb * w) / (1.0 + ww)


def _with(state, m, h_now, dt):
    history = ((h_now,) + tuple(state.history))[:2]
    return replace(state, m=m, t=state.t + dt, step_index=state.step_index + 1, history=history)


def step_heun_p(state: IntegratorState, provider, alpha: float) -> IntegratorState:
    m, dt, t = state.m, state.dt, state.t
    H1 = provider(m, t)
    k1 = llg_rhs(m, H1, alpha)
    m2 = m + dt * k1
    k2 = llg_rhs(m2, provider(m2, t + dt), alpha)
    m_new = fd.normalize(m + 0.5 * dt * (k1 + k2))
    return _with(state, m_new, compose_h(m, H1, alpha), dt)


def step_rk4_p(state: IntegratorState, provider, alpha: float) -> IntegratorState:
    m, dt, t = state.m, state.dt, state.t
    H1 = provider(m, t)
    k1 = llg_rhs(m, H1, alpha)
    m2 = m + 0.5 * dt * k1
    k2 = llg_rhs(m2, provider(m2, t + 0.5 * dt), alpha)
    m3 = m + 0.5 * dt * k2
    k3 = llg_rhs(m3, provider(m3, t + 0.5 * dt), alpha)
    m4 = m + dt * k3
    k4 = llg_rhs(m4, provider(m4, t + dt), alpha)
    m_new = fd.normalize(m + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    return _with(state, m_new, compose_h(m, H1, alpha), dt)


def step_implicit_midpoint(state: IntegratorState, provider, alpha: float, tol: float = 1e-12,
                           max_iter: int = 200, solver: str = "fixed-point") -> IntegratorState:
    """Implicit midpoint rule.

    ``solver="fixed-point"`` iterates the Cayley update with ``h`` taken at the
    midpoint of the previous iterate; it contracts only for ``dt`` of the order
    of the explicit limits. ``solver="newton"`` solves the same system with a
    Newton-Krylov method and then applies one final Cayley update so that the
    result is exactly norm preserving.
    """
    m0, dt, t = state.m, state.dt, state.t
    tmid = t + 0.5 * dt

    def h_mid(m1):
        mid = 0.5 * (m0 + m1)
        return compose_h(mid, provider(mid, tmid), alpha)

    if solver == "newton":
        from scipy.optimize import NoConvergence, newton_krylov

        def residual(m1):
            return m1 - cayley_update(m0, h_mid(m1), dt)

        guess = step_heun_p(replace(state, history=()), provider, alpha).m
        try:
            m1 = newton_krylov(residual, guess, f_tol=tol, maxiter=max_iter)
        except (NoConvergence, ValueError) as exc:
            raise FixedPointDivergence(max_iter, float("nan")) from exc
        m1 = cayley_update(m0, h_mid(m1), dt)
    elif solver == "fixed-point":
        m1 = m0
        change = np.inf
        for it in range(1, max_iter + 1):
            m_next = cayley_update(m0, h_mid(m1), dt)
            change = float(np.max(np.abs(m_next - m1)))
            m1 = m_next
            if not np.isfinite(change):
                break
            if change <= tol:
                break
        else:
            raise FixedPointDivergence(max_iter, change)
        if not np.isfinite(change):
            raise FixedPointDivergence(it, change)
    else:
        raise ConfigError(f"unknown implicit solver {solver!r}")
    return _with(state, m1, compose_h(m0, provider(m0, t), alpha), dt)


def _multistep(state, provider, alpha, weights):
    need = len(weights) - 1
    if len(state.history) < need:
        raise MissingHistory(f"need {need} previous h-lattices, have {len(state.history)}")
    h_now = compose_h(state.m, provider(state.m, state.t), alpha)
    h_half = weights[0] * h_now
    for w, h_old in zip(weights[1:], state.history):
        h_half = h_half + w * h_old
    return _with(state, cayley_update(state.m, h_half, state.dt), h_now, state.dt)


def step_mpe(state: IntegratorState, provider, alpha: float) -> IntegratorState:
    """Midpoint with extrapolation ``h = 3/2 h^j - 1/2 h^{j-1}``."""
    return _multistep(state, provider, alpha, (1.5, -0.5))


def step_mpea(state: IntegratorState, provider, alpha: float) -> IntegratorState:
    """Midpoint with ``h = 23/12 h^j - 16/12 h^{j-1} + 5/12 h^{j-2}``."""
    return _multistep(state, provider, alpha, (23.0 / 12.0, -16.0 / 12.0, 5.0 / 12.0))


STEPPERS = {
    "heunp": step_heun_p,
    "rk4p": step_rk4_p,
    "imp": step_implicit_midpoint,
    "mpe": step_mpe,
    "mpea": step_mpea,
}


def check_method(method: str) -> str:
    method = method.lower()
    if method not in STEPPERS:
        raise ConfigError(f"unknown integrator {method!r}; choose from {', '.join(METHODS)}")
    return method


def step(state: IntegratorState, provider, alpha: float, method: str, **kwargs) -> IntegratorState:
    """One step of ``method``; multistep methods start with RK4P until history is full."""
    method = check_method(method)
    if len(state.history) < HISTORY.get(method, 0):
        return step_rk4_p(state, provider, alpha)
    return STEPPERS[method](state, provider, alpha, **kwargs)


def integrate(m0: np.ndarray, provider, alpha: float, dt: float, T: float, method: str = "mpea",
              output_times=None, callback=None, **kwargs):
    """Integrate to time ``T`` with equal steps ``T / ceil(T / dt)``.

    Returns ``(times, snapshots)`` at ``output_times`` (default: just ``T``),
    each rounded to the nearest step.
    """
    method = check_method(method)
    if dt <= 0:
        raise ConfigError("time step must be positive")
    m0 = np.asarray(m0, dtype=float)
    if T <= 0:
        return [0.0], [m0.copy()]
    n_steps = int(np.ceil(T / dt - 1e-9))
    dt = T / n_steps
    output_steps = sorted({int(round(t / dt)) for t in (output_times if output_times is not None else [T])})
    state = IntegratorState(m=m0.copy(), dt=dt)
    times, snaps = [], []
    if output_steps and output_steps[0] == 0:
        times.append(0.0)
        snaps.append(m0.copy())
    for j in range(1, n_steps + 1):
        state = step(state, provider, alpha, method, **kwargs)
        if not np.all(np.isfinite(state.m)):
            raise InstabilityDetected(f"non-finite magnetization after step {j}", step=j)
        if callback is not None:
            callback(state)
        if j in output_steps:
            times.append(j * dt)
            snaps.append(state.m.copy())
    return times, snaps


# -- stability ----------------------------------------------------------------

# Linearized about a constant state, the Cayley-based multistep methods reduce
# to Adams-Bashforth recurrences in the extrapolation weights.
_AB_WEIGHTS = {"mpe": (1.5, -0.5), "mpea": (23.0 / 12.0, -16.0 / 12.0, 5.0 / 12.0)}


def _amplification(method: str):
    """Spectral radius of the one-step (or companion) map for ``y' = z y / dt``."""
    if method == "heunp":
        return lambda z: abs(1 + z + z * z / 2)
    if method == "rk4p":
        return lambda z: abs(1 + z + z**2 / 2 + z**3 / 6 + z**4 / 24)
    if method in _AB_WEIGHTS:
        beta = _AB_WEIGHTS[method]

        def radius(z):
            # zeta^k - zeta^(k-1) - z sum_j beta_j zeta^(k-1-j) = 0
            coeffs = np.zeros(len(beta) + 1, dtype=complex)
            coeffs[0] = 1.0
            coeffs[1] = -1.0
            coeffs[1:] -= z * np.asarray(beta)
            return float(np.max(np.abs(np.roots(coeffs))))

        return radius
    raise ConfigError(f"no linear stability model for {method!r}")


@lru_cache(maxsize=None)
def ray_stability_extent(method: str, alpha: float, s_max: float = 10.0) -> float:
    """Largest ``s`` such that the method is linearly stable at ``z = s (-alpha + i)``.

    The linearized exchange dynamics has eigenvalues ``(-alpha +- i) w`` with
    ``w >= 0`` ranging over the spectrum of ``-div(a grad)``, so this ray
    bounds the stable ``dt * w``.
    """
    R = _amplification(check_method(method))
    u = complex(-alpha, 1.0)
    g = lambda s: R(s * u) - 1.0 - 1e-12
    grid = np.linspace(1e-6, s_max, 4001)
    vals = np.array([g(s) for s in grid])
    bad = np.nonzero(vals > 0)[0]
    if len(bad) == 0:
        return s_max
    i = bad[0]
    if i == 0:
        return 0.0
    return brentq(g, grid[i - 1], grid[i], xtol=1e-13)


@lru_cache(maxsize=None)
def laplacian_symbol_max(order: int) -> float:
    """``max_theta`` of the symbol of ``-D^2`` (order ``order``) times ``h^2``."""
    w = fd.stencil_weights(2, order)
    r = len(w) // 2
    theta = np.linspace(0.0, np.pi, 2001)
    sym = -sum(wj * np.cos(j * theta) for j, wj in zip(range(-r, r + 1), w))
    return float(sym.max())


def linear_dt_limit(method: str, alpha: float, a_max: float, dim: int, dx: float,
                    order: int = 2) -> float:
    """Linear stability bound on ``dt`` for ``div(a grad)`` with ``a <= a_max``."""
    if method == "imp":
        return np.inf
    omega = dim * a_max * laplacian_symbol_max(order) / dx**2
    return ray_stability_extent(method, alpha) / omega


def heun_dt_factor(a_max: float, dim: int, alpha: float, safety: float = 0.8) -> float:
    """``c`` such that HeunP with ``dt = c dx^2`` is linearly stable for ``div(a grad)``."""
    return safety * linear_dt_limit("heunp", alpha, a_max, dim, 1.0, 2)


def is_unstable(m0, provider, grid, alpha, dt, method, steps=50, growth=10.0, jump=2.0) -> bool:
    """Instability detector used by :func:`estimate_stability_limit`.

    Unstable when the largest discrete gradient grows by more than ``growth``
    over ``steps`` steps, when the field stops being finite, or when the
    largest nodal change in a single step exceeds ``jump`` (unit vectors
    cannot legitimately move further than 2).
    """
    state = IntegratorState(m=np.array(m0, dtype=float), dt=dt)
    g0 = fd.max_gradient(state.m, grid)
    for _ in range(steps):
        previous = state.m
        try:
            state = step(state, provider, alpha, method)
        except (FixedPointDivergence, ArithmeticError, ValueError):
            return True
        if not np.all(np.isfinite(state.m)):
            return True
        if float(np.max(np.linalg.norm(state.m - previous, axis=-1))) >= jump:
            return True
        if fd.max_gradient(state.m, grid) > growth * g0:
            return True
    return False


def seeded_perturbation(m0: np.ndarray, amplitude: float = 1e-3, seed: int = 0) -> np.ndarray:
    """Unit field ``m0`` with a small seeded random perturbation (excites all modes)."""
    rng = np.random.default_rng(seed)
    return fd.normalize(m0 + amplitude * rng.standard_normal(m0.shape))


@dataclass
class StabilityResult:
    dx: np.ndarray
    dt_max: np.ndarray
    slope: float
    c_stab: np.ndarray  # dt_max / dx^2


def bisect_stability(m0, provider, grid, alpha, method, dx, iterations=12, steps=50):
    lo, hi = 1e-8 * 10 * dx * dx, 10 * dx * dx
    if not is_unstable(m0, provider, grid, alpha, hi, method, steps):
        return hi  # everything in the bracket is stable
    if is_unstable(m0, provider, grid, alpha, lo, method, steps):
        raise NoStableStepFound(f"{method} unstable already at dt={lo:.3e} (dx={dx:.3e})")
    for _ in range(iterations):
        mid = np.sqrt(lo * hi)
        if is_unstable(m0, provider, grid, alpha, mid, method, steps):
            hi = mid
        else:
            lo = mid
    return lo


def estimate_stability_limit(method: str, problem, dx_list, alpha: float, iterations: int = 12,
                             steps: int = 50) -> StabilityResult:
    """Empirical largest stable ``dt`` per grid spacing, with the log-log slope.

    ``problem(dx)`` returns ``(m0, provider, grid)`` for a periodic grid of
    spacing ``dx``.
    """
    method = check_method(method)
    dxs, dts = [], []
    for dx in dx_list:
        m0, provider, grid = problem(dx)
        dxs.append(grid.spacing[0])
        dts.append(bisect_stability(m0, provider, grid, alpha, method, grid.spacing[0], iterations, steps))
    dxs, dts = np.array(dxs), np.array(dts)
    slope = float(np.polyfit(np.log(dxs), np.log(dts), 1)[0]) if len(dxs) > 1 else float("nan")
    return StabilityResult(dxs, dts, slope, dts / dxs**2)
