import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from llhmm import grid as fd
from llhmm.errors import MissingHistory, ShapeMismatch
from llhmm.integrators import (
    METHODS,
    FieldProvider,
    IntegratorState,
    bisect_stability,
    cayley_update,
    compose_h,
    homogenized_provider,
    integrate,
    linear_dt_limit,
    llg_rhs,
    ray_stability_extent,
    step,
    step_implicit_midpoint,
    step_mpe,
    step_mpea,
    zero_provider,
)


def random_unit(shape, seed):
    return fd.normalize(np.random.default_rng(seed).normal(size=shape + (3,)))


def spin_provider():
    return FieldProvider(lambda m, t: np.broadcast_to([0.0, 0.0, 1.0], m.shape).copy(), "spin")


def spin_exact(t, alpha, theta0=np.pi / 3):
    # damped precession about z: azimuth advances at unit rate, tan(theta/2) decays like exp(-alpha t)
    theta = 2 * np.arctan(np.tan(theta0 / 2) * np.exp(-alpha * t))
    return np.array([np.sin(theta) * np.cos(t), np.sin(theta) * np.sin(t), np.cos(theta)])


def spin_errors(method, alpha, dts, T=1.0):
    m0 = spin_exact(0.0, alpha)[None, :]
    errs = []
    for dt in dts:
        _, snaps = integrate(m0, spin_provider(), alpha, dt, T, method)
        errs.append(np.linalg.norm(snaps[-1][0] - spin_exact(T, alpha)))
    return np.array(errs)


def test_rhs_parallel_fields_vanish():
    m = random_unit((5,), 0)
    assert np.max(np.abs(llg_rhs(m, 2.5 * m, 0.3))) <= 1e-15


def test_rhs_single_node():
    f = llg_rhs(np.array([[1.0, 0, 0]]), np.array([[0, 0, 1.0]]), 0.0)
    assert np.array_equal(f, [[0.0, 1.0, 0.0]])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 2.0))
def test_rhs_orthogonal_and_h_identity(seed, alpha):
    m = random_unit((20,), seed)
    H = np.random.default_rng(seed + 1).normal(size=(20, 3))
    f = llg_rhs(m, H, alpha)
    assert np.max(np.abs(np.sum(f * m, axis=-1))) <= 1e-14 * max(1.0, np.abs(H).max())
    h = compose_h(m, H, alpha)
    assert np.max(np.abs(-np.cross(m, h) - f)) <= 1e-14 * max(1.0, np.abs(H).max()) * 10


def test_compose_h_special_cases():
    m = random_unit((4,), 3)
    H = np.random.default_rng(4).normal(size=(4, 3))
    assert np.array_equal(compose_h(m, H, 0.0), H)
    assert np.allclose(compose_h(m, 3.0 * m, 0.7), 3.0 * m, atol=1e-15)
    with pytest.raises(ShapeMismatch):
        llg_rhs(m, H[:3], 0.1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-50, 50), st.floats(1e-4, 1.0))
def test_cayley_update_preserves_norm(seed, scale, dt):
    m0 = random_unit((16,), seed)
    h = scale * np.random.default_rng(seed + 7).normal(size=(16, 3))
    m1 = cayley_update(m0, h, dt)
    assert np.max(np.abs(np.linalg.norm(m1, axis=-1) - 1)) <= 1e-14
    # the defining relation holds exactly
    assert np.allclose((m1 - m0) / dt, -np.cross(0.5 * (m0 + m1), h), atol=1e-10 * max(1, abs(scale)))


@settings(max_examples=10, deadline=None)
@given(st.sampled_from(METHODS), st.integers(0, 2**31 - 1), st.floats(0.0, 1.0))
def test_all_steppers_preserve_unit_norm(method, seed, alpha):
    g = fd.Grid.periodic(8, 2)
    m0 = random_unit(g.n, seed)
    provider = homogenized_provider(np.array([[0.6, 0.03], [0.03, 0.7]]), g, 2)
    dt = 0.5 * linear_dt_limit("heunp", alpha, 0.7, 2, g.spacing[0], 2)
    state = IntegratorState(m=m0, dt=dt)
    for _ in range(6):
        state = step(state, provider, alpha, method)
        assert np.max(np.abs(np.linalg.norm(state.m, axis=-1) - 1)) <= 1e-12


@pytest.mark.parametrize("method", METHODS)
def test_zero_field_is_identity(method):
    m0 = random_unit((6,), 11)
    state = IntegratorState(m=m0, dt=0.1, history=(np.zeros_like(m0),) * 2)
    out = step(state, zero_provider(), 0.5, method)
    assert np.allclose(out.m, m0, atol=1e-15)


def test_multistep_requires_history():
    m0 = random_unit((3,), 1)
    with pytest.raises(MissingHistory):
        step_mpe(IntegratorState(m=m0, dt=0.1), zero_provider(), 0.1)
    with pytest.raises(MissingHistory):
        step_mpea(IntegratorState(m=m0, dt=0.1, history=(m0,)), zero_provider(), 0.1)


@pytest.mark.parametrize("method,lo,hi", [("heunp", 1.8, 2.2), ("rk4p", 3.7, 4.3), ("mpe", 1.8, 2.2),
                                          ("mpea", 1.8, np.inf), ("imp", 1.8, 2.2)])
def test_single_spin_orders(method, lo, hi):
    dts = np.array([1e-2, 5e-3, 2.5e-3])
    errs = spin_errors(method, 0.1, dts)
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert lo <= slope <= hi, (errs, slope)


def test_integration_is_deterministic():
    g = fd.Grid.periodic(16, 2)
    m0 = random_unit(g.n, 5)
    provider = homogenized_provider(np.diag([0.6, 0.7]), g, 4)
    runs = [integrate(m0, provider, 0.01, 1e-4, 2e-3, "mpea")[1][-1] for _ in range(2)]
    assert np.array_equal(runs[0], runs[1])


def test_implicit_midpoint_conserves_energy_without_damping():
    g = fd.Grid.periodic(32)
    x = g.axis_coords(0)
    raw = np.stack([np.cos(2 * np.pi * x), np.sin(2 * np.pi * x), 0.4 + 0.3 * np.cos(4 * np.pi * x)], -1)
    m = fd.normalize(raw)
    a_half = [np.ones(g.n)]
    provider = FieldProvider(lambda v, t: fd.div_a_grad(a_half, v, g), "chain")
    e0 = fd.exchange_energy(a_half, m, g)
    state = IntegratorState(m=m, dt=1e-4)
    for _ in range(100):
        state = step_implicit_midpoint(state, provider, 0.0)
    assert abs(fd.exchange_energy(a_half, state.m, g) - e0) <= 1e-8


def test_implicit_midpoint_zero_field_single_iteration():
    m0 = random_unit((4,), 2)
    out = step_implicit_midpoint(IntegratorState(m=m0, dt=0.3), zero_provider(), 0.2, max_iter=1)
    assert np.array_equal(out.m, m0)


def test_zero_field_stability_returns_bracket_top():
    g = fd.Grid.periodic(10)
    m0 = random_unit(g.n, 0)
    dx = g.spacing[0]
    assert bisect_stability(m0, zero_provider(), g, 0.01, "heunp", dx) == 10 * dx * dx


def test_ray_extent_ordering():
    # RK4P reaches further along the near-imaginary ray than HeunP, MPEA further than MPE
    assert ray_stability_extent("rk4p", 0.01) > ray_stability_extent("heunp", 0.01)
    assert ray_stability_extent("mpea", 0.01) > ray_stability_extent("mpe", 0.01)
    assert linear_dt_limit("imp", 0.01, 1.0, 1, 0.1) == np.inf
