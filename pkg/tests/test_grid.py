import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from llhmm import grid as fd
from llhmm.errors import AxisOutOfRange, NonPositiveCoefficient, NonSPDMatrix, StencilWiderThanGrid

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_grid_spacing_matches_extent():
    g = fd.Grid.periodic(20, 2, extent=2.0)
    assert g.spacing == (0.1, 0.1)
    assert np.isclose(g.spacing[0] * g.n[0], 2.0)
    b = fd.Grid.box(4, 0.25, 1)
    assert b.n == (9,)
    assert np.isclose(b.spacing[0] * (b.n[0] - 1), 2.0)
    assert np.allclose(b.axis_coords(0), np.linspace(-1, 1, 9))


def test_first_derivative_of_linear_is_constant():
    g = fd.Grid.box(10, 0.1, 1)
    x = g.axis_coords(0)
    d = fd.central_difference(3 * x, g, 0, 1, 2)
    assert np.allclose(d[1:-1], 3.0, atol=1e-12)


def test_second_derivative_of_quadratic_is_two():
    g = fd.Grid.box(10, 0.1, 1)
    x = g.axis_coords(0)
    d = fd.central_difference(x**2, g, 0, 2, 2)
    assert np.allclose(d[1:-1], 2.0, atol=1e-10)


def test_fourth_order_second_derivative_converges_at_rate_four():
    errs = []
    for n in (32, 64):
        g = fd.Grid.periodic(n)
        x = g.axis_coords(0)
        d = fd.central_difference(np.sin(2 * np.pi * x), g, 0, 2, 4)
        errs.append(np.max(np.abs(d + 4 * np.pi**2 * np.sin(2 * np.pi * x))))
    assert 14 < errs[0] / errs[1] < 18


@pytest.mark.parametrize("derivative", [1, 2])
@pytest.mark.parametrize("order", [2, 4, 6, 8])
def test_stencil_exact_on_monomials(derivative, order):
    g = fd.Grid.box(12, 0.05, 1)
    x = g.axis_coords(0)
    inner = slice(order, -order)
    for degree in range(order + derivative):
        d = fd.central_difference(x**degree, g, 0, derivative, order)
        exact = np.zeros_like(x) if degree < derivative else (
            degree * x ** (degree - 1) if derivative == 1 else degree * (degree - 1) * x ** max(degree - 2, 0))
        scale = max(1.0, np.max(np.abs(exact[inner])))
        assert np.max(np.abs(d[inner] - exact[inner])) <= 1e-9 * scale, degree


def test_axis_and_width_errors():
    g = fd.Grid.periodic(4)
    with pytest.raises(AxisOutOfRange):
        fd.central_difference(np.zeros(4), g, 1)
    with pytest.raises(StencilWiderThanGrid):
        fd.central_difference(np.zeros(4), g, 0, 2, 8)


def test_div_a_grad_zero_for_linear_with_unit_coefficient():
    g = fd.Grid.box(6, 0.1, 2)
    x = g.coords()
    m = np.stack([x[..., 0], 2 * x[..., 1], x[..., 0] - x[..., 1]], axis=-1)
    a = [np.ones(g.n), np.ones(g.n)]
    assert np.allclose(fd.div_a_grad(a, m, g), 0.0, atol=1e-10)


def test_div_a_grad_second_order_convergence():
    errs = []
    for n in (40, 80):
        g = fd.Grid.periodic(n)
        x = g.axis_coords(0)
        m = np.zeros((n, 3))
        m[:, 2] = np.sin(2 * np.pi * x)
        H = fd.div_a_grad([np.ones(n)], m, g)
        errs.append(np.max(np.abs(H[:, 2] + 4 * np.pi**2 * np.sin(2 * np.pi * x))))
    assert 3.8 < errs[0] / errs[1] < 4.2


def test_div_a_grad_rejects_non_positive():
    g = fd.Grid.periodic(8)
    with pytest.raises(NonPositiveCoefficient):
        fd.div_a_grad([np.zeros(8)], np.zeros((8, 3)), g)


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 12), st.integers(1, 2), st.integers(0, 2**31 - 1))
def test_div_a_grad_conserves_on_periodic_grids(n, dim, seed):
    rng = np.random.default_rng(seed)
    g = fd.Grid.periodic(n, dim)
    a = [rng.uniform(0.2, 2.0, g.n) for _ in range(dim)]
    m = rng.normal(size=g.n + (3,))
    H = fd.div_a_grad(a, m, g)
    total = H.reshape(-1, 3).sum(axis=0) * g.cell_volume
    scale = np.abs(H).sum() * g.cell_volume
    assert np.all(np.abs(total) <= 1e-13 * max(1.0, scale))


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(float, (3,), elements=st.floats(0.2, 2)), hnp.arrays(float, (3,), elements=st.floats(0.2, 2)),
       st.integers(0, 2**31 - 1))
def test_div_grad_AH_is_linear_in_AH(d1, d2, seed):
    rng = np.random.default_rng(seed)
    g = fd.Grid.periodic(10, 2)
    m = rng.normal(size=(10, 10, 3))
    A1 = np.array([[d1[0], 0.05 * d1[2]], [0.05 * d1[2], d1[1]]])
    A2 = np.array([[d2[0], 0.05 * d2[2]], [0.05 * d2[2], d2[1]]])
    for order in (2, 4):
        lhs = fd.div_grad_AH(m, g, A1 + A2, order)
        rhs = fd.div_grad_AH(m, g, A1, order) + fd.div_grad_AH(m, g, A2, order)
        assert np.max(np.abs(lhs - rhs)) <= 1e-13 * max(1.0, np.max(np.abs(lhs)))


def test_div_grad_identity_equals_laplacian():
    rng = np.random.default_rng(1)
    g = fd.Grid.periodic(12, 2)
    m = rng.normal(size=(12, 12, 3))
    for order in (2, 4):
        assert np.array_equal(fd.div_grad_AH(m, g, np.eye(2), order), fd.laplacian(m, g, order))


def test_div_grad_AH_mixed_term():
    AH = np.array([[0.617, 0.026], [0.026, 0.715]])
    g = fd.Grid.periodic(64, 2)
    x = g.coords()
    m = np.zeros((64, 64, 3))
    m[..., 2] = np.sin(2 * np.pi * (x[..., 0] + x[..., 1]))
    H = fd.div_grad_AH(m, g, AH, 4)
    exact = -4 * np.pi**2 * (AH[0, 0] + AH[1, 1] + 2 * AH[0, 1]) * m[..., 2]
    assert np.max(np.abs(H[..., 2] - exact)) < 1e-3


def test_div_grad_AH_diagonal_order_two():
    errs = []
    for n in (16, 32):
        g = fd.Grid.periodic(n, 2)
        x = g.coords()
        m = np.zeros((n, n, 3))
        m[..., 2] = np.sin(2 * np.pi * x[..., 0]) * np.sin(2 * np.pi * x[..., 1])
        H = fd.div_grad_AH(m, g, np.diag([0.5, 1.5]), 2)
        errs.append(np.max(np.abs(H[..., 2] + 4 * np.pi**2 * 2.0 * m[..., 2])))
    assert 1.8 < np.log2(errs[0] / errs[1]) < 2.2


def test_non_spd_rejected():
    with pytest.raises(NonSPDMatrix):
        fd.check_spd([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(NonSPDMatrix):
        fd.check_spd([[1.0, 0.1], [0.0, 1.0]])


@settings(max_examples=25, deadline=None)
@given(hnp.arrays(float, (5, 3), elements=finite))
def test_normalize_gives_unit_vectors(v):
    if np.any(np.linalg.norm(v, axis=-1) < 1e-3):
        return
    u = fd.normalize(v)
    assert np.allclose(np.linalg.norm(u, axis=-1), 1.0, atol=1e-14)
