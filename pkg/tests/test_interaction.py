import math

import numpy as np
import pytest

from zkcollide.interaction import (
    AnsatzCoefficients,
    InteractionTable,
    SeparationTooSmallError,
    TableRangeError,
    auxiliary_profiles,
    build_coefficient_table,
    interaction_pair,
)
from zkcollide.spectral import Axis, Grid2D, derivative, inner_product, place_profile, place_shifted

GRID = Grid2D(Lx=32.0, Ly=32.0, Nx=256, Ny=256)


def test_pair_matches_grid_quadrature(profile) -> None:
    z = 6.0
    q = place_profile(profile, GRID)
    shifted = place_shifted(profile, GRID, (-z, 0.0))
    pair = interaction_pair(z, profile)
    assert pair.F == pytest.approx(inner_product(shifted, q * q), rel=1e-7)
    assert pair.G == pytest.approx(inner_product(shifted, derivative(q * q, Axis.X)), rel=1e-7)
    assert pair.G > 0.0


def test_pair_at_contact_is_the_cubic_integral(profile, constants) -> None:
    pair = interaction_pair(0.0, profile)
    assert pair.F == pytest.approx(constants.q3, rel=1e-8)
    assert abs(pair.G) < 1e-10


def test_pair_rejects_negative_separation(profile) -> None:
    with pytest.raises(ValueError, match="non-negative"):
        interaction_pair(-1.0, profile)


def test_table_interpolates_through_nodes(table) -> None:
    assert table.overlap(table.z_values) == pytest.approx(table.F, rel=1e-12)
    assert table.attraction(table.z_values) == pytest.approx(table.G, rel=1e-12)


@pytest.mark.parametrize("z", [7.3, 18.8, 45.0])
def test_force_is_minus_the_potential_slope(table, z: float) -> None:
    h = 1e-4
    slope = (table.overlap(z + h) - table.overlap(z - h)) / (2.0 * h)
    assert float(table.attraction(z)[0]) == pytest.approx(-float(slope[0]), rel=1e-6)


def test_table_normalization_approaches_c_int(table, constants) -> None:
    end = float(table.normalized_g[-1])
    assert abs(end / constants.c_int - 1.0) < 0.2
    assert float(table._phi(np.array([1e6]), 0)[0]) == pytest.approx(math.log(constants.c_int), abs=1e-4)


def test_table_range(table) -> None:
    with pytest.raises(TableRangeError):
        table.overlap(1.0)
    closed = InteractionTable(z_values=table.z_values, G=table.G, F=table.F)
    with pytest.raises(TableRangeError):
        closed.attraction(table.z_max + 1.0)


def test_table_validation() -> None:
    with pytest.raises(ValueError, match="increasing"):
        InteractionTable(z_values=np.array([2.0, 1.0]), G=np.ones(2), F=np.ones(2))
    with pytest.raises(ValueError, match="positive"):
        InteractionTable(z_values=np.array([1.0, 2.0]), G=np.array([1.0, -1.0]), F=np.ones(2))


def test_symmetric_coefficients() -> None:
    coefficients = AnsatzCoefficients.symmetric(10.0, alpha=0.3, gamma=-0.2)
    assert coefficients.p1 == (0.3, 0.0, -0.2)
    assert coefficients.p2 == (0.3, 0.0, 0.2)


def test_auxiliary_plateaus(profile, constants) -> None:
    grid = Grid2D(Lx=32.0, Ly=32.0, Nx=256, Ny=256)
    aux = auxiliary_profiles(profile, grid)
    # (1 - D)^-1 keeps the plane integral, and LambdaQ integrates to zero in 2D
    assert abs(float(aux.l.sum()) * grid.dy) < 1e-8
    assert abs(float(aux.h.sum()) * grid.dy) < 1e-10
    assert np.abs(aux.W.values[0] - aux.l).max() < 1e-10
    assert float(inner_product(aux.X, place_profile(profile, grid))) == pytest.approx(-constants.bessel_q_q, rel=1e-6)


def test_kernel_coefficients(kernel, constants) -> None:
    coefficients = kernel.coefficients(10.0)
    assert coefficients.alpha2 == coefficients.alpha1
    assert coefficients.gamma2 == -coefficients.gamma1
    assert coefficients.beta1 == coefficients.beta2 == 0.0
    assert coefficients.gamma1 == pytest.approx(-kernel.attraction(10.0) / constants.lam_q_q)
    with pytest.raises(SeparationTooSmallError):
        kernel.coefficients(4.0)


def test_coefficient_table_follows_the_kernel(kernel) -> None:
    table = build_coefficient_table(kernel, z_min=6.0, z_max=9.0, step=0.5)
    for z in (6.0, 7.5, 9.0):
        exact = kernel.coefficients(z)
        tabulated = table.coefficients(z)
        assert tabulated.alpha1 == pytest.approx(exact.alpha1, rel=1e-10)
        assert tabulated.gamma1 == pytest.approx(exact.gamma1, rel=1e-10)
    between = table.coefficients(7.25)
    assert between.gamma1 == pytest.approx(kernel.coefficients(7.25).gamma1, rel=1e-3)
    d_alpha, d_gamma = table.derivatives(7.5)
    k_alpha, k_gamma = kernel.derivatives(7.5)
    assert d_gamma == pytest.approx(k_gamma, rel=1e-2)
    assert d_alpha == pytest.approx(k_alpha, rel=5e-2, abs=1e-12)
    with pytest.raises(SeparationTooSmallError):
        table.coefficients(4.0)
