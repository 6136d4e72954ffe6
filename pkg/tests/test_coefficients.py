import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from llhmm import expr
from llhmm.coefficients import (
    PRESETS,
    constant,
    harmonic_mean_1d,
    homogenized_matrix,
    local_average,
    parse_coefficient,
    preset,
    solve_cell_problem,
)
from llhmm.errors import ConfigError, ExpressionSyntaxError, NonPositiveCoefficient, UnknownIdentifier


def test_expression_matches_ex1_preset():
    rng = np.random.default_rng(0)
    x = rng.random((100, 1))
    parsed = parse_coefficient("1 + 0.5*sin(2*pi*x1/eps)", 0.01, dim=1)
    assert np.allclose(parsed(x), preset("EX1", 0.01)(x), rtol=0, atol=1e-14)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_agree_with_text_twins(name):
    p = PRESETS[name]
    rng = np.random.default_rng(1)
    x = rng.random((1000, p.dim))
    twin = parse_coefficient(p.text, 0.02, dim=p.dim)
    assert np.max(np.abs(twin(x) - preset(name, 0.02)(x))) <= 1e-14


def test_constant_expression_bounds():
    c = parse_coefficient("1", 0.1, dim=1)
    assert c.bounds == (1.0, 1.0)


def test_syntax_error_position():
    with pytest.raises(ExpressionSyntaxError) as info:
        parse_coefficient("sin(", 0.1)
    assert info.value.position == 4


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier) as info:
        parse_coefficient("1 + y", 0.1)
    assert info.value.name == "y"


def test_expression_operator_precedence():
    tree = expr.parse("2 + 3*4^2 - -1", dim=1)
    assert expr.evaluate(tree, {}) == 2 + 3 * 16 + 1


def test_non_positive_expression_rejected():
    with pytest.raises(NonPositiveCoefficient):
        parse_coefficient("sin(2*pi*x1)", 0.1, dim=1)


def test_unknown_preset():
    with pytest.raises(ConfigError):
        preset("EX9", 0.1)


def test_constant_coefficient_has_zero_corrector():
    c = constant(1.7, 2)
    chi = solve_cell_problem(c, 16)
    assert np.max(np.abs(chi)) == 0.0
    A = homogenized_matrix(c, 16).matrix
    assert np.max(np.abs(A - 1.7 * np.eye(2))) <= 1e-12


def test_1d_corrector_matches_closed_form():
    c = preset("EX1", 0.5)
    n = 1024
    chi = solve_cell_problem(c, n)[0]
    a_star = harmonic_mean_1d(c.cell, 1 << 16)
    # chi' = -1 + a*/a, integrated with the midpoint rule on the half points
    y_half = (np.arange(n) + 0.5) / n
    dchi = -1.0 + a_star / c.cell(y_half[:, None])
    ref = np.concatenate([[0.0], np.cumsum(dchi) / n])[:-1]
    ref -= ref.mean()
    assert np.max(np.abs(chi - ref)) < 1e-6


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 0.45), st.integers(1, 3), st.floats(0.0, 1.0))
def test_1d_homogenized_is_harmonic_mean(amp, freq, phase):
    text = f"1 + {amp}*sin(2*pi*{freq}*x1/eps + {phase})"
    c = parse_coefficient(text, 0.5, dim=1, periodic=True)
    AH = homogenized_matrix(c, 1024).scalar
    assert abs(AH - harmonic_mean_1d(c.cell, 1 << 15)) < 1e-6


@settings(max_examples=6, deadline=None)
@given(st.floats(0.05, 0.4), st.floats(0.05, 0.4), st.floats(0.0, 0.2))
def test_homogenized_eigenvalues_between_means(a1, a2, c):
    text = f"1 + {a1}*sin(2*pi*x1/eps) + {a2}*cos(2*pi*x2/eps) + {c}*sin(2*pi*(x1 + x2)/eps)"
    coef = parse_coefficient(text, 0.5, dim=2, periodic=True)
    n = 32
    A = homogenized_matrix(coef, n).matrix
    y = np.stack(np.meshgrid(*[np.arange(256) / 256] * 2, indexing="ij"), axis=-1)
    vals = coef.cell(y)
    harmonic, arithmetic = 1.0 / np.mean(1.0 / vals), np.mean(vals)
    eig = np.linalg.eigvalsh(A)
    assert np.allclose(A, A.T)
    assert harmonic - 1e-3 <= eig.min() and eig.max() <= arithmetic + 1e-3


def test_ex3_matches_separable_closed_form():
    A = homogenized_matrix(preset("EX3", 0.5), 128).matrix
    exact = 1.1 * np.sqrt(1.1**2 - 0.25)
    assert np.max(np.abs(A - exact * np.eye(2))) < 2e-3


def test_bounds_of_ex1():
    lo, hi = preset("EX1", 0.01).bounds
    assert abs(lo - 0.5) < 1e-3 and abs(hi - 1.5) < 1e-3


def test_local_average_of_periodic_is_cell_mean():
    c = preset("EX1", 0.1)
    avg = local_average(c, 0.1)
    x = np.linspace(0, 1, 17)[:, None]
    assert np.allclose(avg(x), 1.0, atol=1e-12)
