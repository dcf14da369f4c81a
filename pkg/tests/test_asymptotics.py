import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from zkcollide.asymptotics import (
    A0,
    DomainError,
    SeriesDivergenceError,
    TruncationOrderError,
    bessel_k0,
    lk_series,
    pq_coefficients,
    q_translated_expansion,
    series_coefficient,
    weighted_series_error,
)


@settings(max_examples=50)
@given(r=st.floats(min_value=0.05, max_value=60.0))
def test_bessel_k0_matches_scipy(r: float) -> None:
    k0, k1 = special.k0(r), special.k1(r)
    assert float(bessel_k0(r)) == pytest.approx(k0, rel=1e-11)
    assert float(bessel_k0(r, 1)) == pytest.approx(-k1, rel=1e-11)
    assert float(bessel_k0(r, 2)) == pytest.approx(k0 + k1 / r, rel=1e-11)


def test_bessel_k0_keeps_shape() -> None:
    r = np.linspace(1.0, 5.0, 12).reshape(3, 4)
    assert bessel_k0(r).shape == (3, 4)


@pytest.mark.parametrize("r", [0.0, -1.0, math.inf])
def test_bessel_k0_domain(r: float) -> None:
    with pytest.raises(DomainError):
        bessel_k0(r)


def test_series_coefficients() -> None:
    assert series_coefficient(0) == A0
    assert series_coefficient(1) == pytest.approx(-A0 / 8.0)
    assert series_coefficient(2) == pytest.approx(9.0 * A0 / 128.0)
    with pytest.raises(ValueError, match="non-negative"):
        series_coefficient(-1)


@pytest.mark.parametrize("k", range(4))
def test_series_remainder_below_first_omitted_term(k: int) -> None:
    r = np.linspace(10.0, 30.0, 81)
    bound = abs(series_coefficient(k + 1))
    assert float(weighted_series_error(r, k).max()) <= 1.0001 * bound + 1e-8


def test_series_approaches_k0() -> None:
    r = np.array([20.0])
    errors = [float(abs(lk_series(r, k) - bessel_k0(r))[0]) for k in range(4)]
    assert errors == sorted(errors, reverse=True)


@pytest.mark.parametrize("deriv", [1, 2])
def test_series_derivatives(deriv: int) -> None:
    r, h = 12.0, 1e-5
    numeric = (lk_series(r + h, 3, deriv - 1) - lk_series(r - h, 3, deriv - 1)) / (2.0 * h)
    assert float(lk_series(r, 3, deriv)) == pytest.approx(float(numeric), rel=1e-7)


def test_series_domain() -> None:
    with pytest.raises(DomainError):
        lk_series(0.5, 1)
    with pytest.raises(SeriesDivergenceError):
        lk_series(1.5, 8)
    with pytest.raises(ValueError, match="series order"):
        lk_series(10.0, 9)


def test_pq_table() -> None:
    assert pq_coefficients(0).pq == ((0, 0, 0, A0),)
    p1 = [row for row in pq_coefficients(1).pq if row[0] == 1]
    # P_1 = a0 (-1/8 - x/2 - y^2/2)
    assert sorted(p1) == sorted([(1, 0, 0, -A0 / 8.0), (1, 1, 0, -A0 / 2.0), (1, 0, 2, -A0 / 2.0)])
    with pytest.raises(TruncationOrderError):
        pq_coefficients(4)


def test_p2_matches_the_direct_expansion() -> None:
    # P_2 / a0 from expanding r^-1/2, r^-3/2, r^-5/2 and exp(-r) in 1/z by hand
    p2 = {(px, py): c for q, px, py, c in pq_coefficients(2).pq if q == 2}
    expected = {
        (2, 0): 3.0 / 8.0,
        (1, 2): 3.0 / 4.0,
        (1, 0): 3.0 / 16.0,
        (0, 4): 1.0 / 8.0,
        (0, 2): -3.0 / 16.0,
        (0, 0): 9.0 / 128.0,
    }
    assert set(p2) == set(expected)
    for key, value in expected.items():
        assert p2[key] == pytest.approx(A0 * value, rel=1e-14)


@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_translated_expansion_error_order(n: int) -> None:
    sc = pq_coefficients(3)
    x, y = 1.0, 0.7

    def error(z: float) -> float:
        exact = float(special.k0(math.hypot(x + z, y)))
        return abs(float(q_translated_expansion(x, y, z, n, sc, 1.0)) / exact - 1.0)

    order = 2.0 ** (n + 1)
    for z in (50.0, 100.0):
        assert 0.7 * order <= error(z) / error(2.0 * z) <= 1.4 * order


def test_translated_expansion_converges() -> None:
    sc = pq_coefficients(3)
    z = 20.0
    xs, ys = np.meshgrid(np.linspace(-2.0, 2.0, 9), np.linspace(-2.0, 2.0, 9), indexing="ij")
    exact = special.k0(np.hypot(xs + z, ys))
    errors = [float(np.abs(q_translated_expansion(xs, ys, z, n, sc, 1.0) / exact - 1.0).max()) for n in range(4)]
    assert errors[1] < errors[0]
    assert errors[3] < errors[1]
    assert errors[3] < 1e-3


def test_translated_expansion_domain() -> None:
    sc = pq_coefficients(2)
    with pytest.raises(DomainError):
        q_translated_expansion(0.0, 0.0, 4.0, 1, sc, 1.0)
    with pytest.raises(DomainError):
        q_translated_expansion(5.0, 0.0, 20.0, 1, sc, 1.0)
    with pytest.raises(TruncationOrderError):
        q_translated_expansion(0.0, 0.0, 20.0, 3, sc, 1.0)
