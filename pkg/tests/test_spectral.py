import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from tests.util import SMALL_GRID, gaussian
from zkcollide.spectral import (
    Axis,
    BoxTooSmallError,
    Field2D,
    Grid2D,
    GridMismatchError,
    NonDecayingInputError,
    ProfileKind,
    antiderivative_x,
    bessel_potential,
    boundary_strip_mass,
    derivative,
    h1_norm,
    half_cosine_cutoff,
    helmholtz,
    inner_product,
    laplacian,
    norms,
    place_profile,
    radial_kind,
    row_integral,
    sample_spectral,
    translate,
)


def test_grid_validation() -> None:
    with pytest.raises(ValueError, match="powers of two"):
        Grid2D(Lx=8.0, Ly=8.0, Nx=100, Ny=128)
    with pytest.raises(ValueError, match="positive"):
        Grid2D(Lx=-8.0, Ly=8.0, Nx=128, Ny=128)
    grid = Grid2D(Lx=8.0, Ly=4.0, Nx=64, Ny=32)
    assert grid.dx == 0.25
    assert grid.x[0] == -8.0
    assert grid.x[32] == 0.0
    assert grid.kx.shape == (64, 1)
    assert grid.ky.shape == (1, 17)


def test_derivative_of_a_trigonometric_field() -> None:
    grid = Grid2D(Lx=4.0, Ly=2.0, Nx=64, Ny=32)
    f = Field2D.from_function(grid, lambda x, y: np.sin(math.pi * x / 4.0) * np.cos(math.pi * y))
    xx, yy = grid.mesh
    dfx = (math.pi / 4.0) * np.cos(math.pi * xx / 4.0) * np.cos(math.pi * yy)
    dfy = -math.pi * np.sin(math.pi * xx / 4.0) * np.sin(math.pi * yy)
    assert np.abs(derivative(f, Axis.X).values - dfx).max() < 1e-12
    assert np.abs(derivative(f, "y").values - dfy).max() < 1e-12
    expected = -((math.pi / 4.0) ** 2 + math.pi**2) * f.values
    assert np.abs(laplacian(f).values - expected).max() < 1e-11
    with pytest.raises(ValueError, match="order"):
        derivative(f, Axis.X, 3)


def test_bessel_potential_inverts_helmholtz() -> None:
    f = gaussian(SMALL_GRID, (0.5, -1.0))
    assert np.abs(helmholtz(bessel_potential(f)).values - f.values).max() < 1e-12


def test_antiderivative_x() -> None:
    f = gaussian(SMALL_GRID, (1.0, 0.0))
    big = antiderivative_x(f)
    xx, yy = SMALL_GRID.mesh
    exact = 0.5 * math.sqrt(math.pi) * special.erfc(xx - 1.0) * np.exp(-(yy**2))
    assert np.abs(big.values - exact).max() < 1e-10
    assert np.abs(big.values[0] - row_integral(f)).max() < 1e-10
    assert np.abs(big.values[0] - math.sqrt(math.pi) * np.exp(-(SMALL_GRID.y**2))).max() < 1e-10
    assert np.abs(big.values[-1]).max() < 1e-10


def test_antiderivative_needs_decay() -> None:
    with pytest.raises(NonDecayingInputError):
        antiderivative_x(Field2D(SMALL_GRID, np.ones(SMALL_GRID.shape)))


def test_grid_mismatch() -> None:
    other = Grid2D(Lx=8.0, Ly=8.0, Nx=64, Ny=64)
    with pytest.raises(GridMismatchError):
        inner_product(gaussian(SMALL_GRID), gaussian(other))
    with pytest.raises(GridMismatchError):
        gaussian(SMALL_GRID) + gaussian(other)


def test_field_rejects_non_finite_values() -> None:
    values = np.zeros(SMALL_GRID.shape)
    values[3, 3] = np.nan
    with pytest.raises(ValueError, match="finite"):
        Field2D(SMALL_GRID, values)


def test_norms_of_a_gaussian() -> None:
    f = gaussian(SMALL_GRID)
    result = norms(f)
    assert result.l2 == pytest.approx(math.sqrt(math.pi / 2.0), rel=1e-12)
    assert result.h1 == pytest.approx(math.sqrt(1.5 * math.pi), rel=1e-10)
    assert h1_norm(f) == pytest.approx(result.h1)
    assert result.l3 == pytest.approx((math.pi / 3.0) ** (1.0 / 3.0), rel=1e-12)


@settings(deadline=None, max_examples=25)
@given(
    sx=st.floats(min_value=-3.0, max_value=3.0),
    sy=st.floats(min_value=-3.0, max_value=3.0),
)
def test_translate(sx: float, sy: float) -> None:
    f = gaussian(SMALL_GRID)
    moved = translate(f, (sx, sy))
    assert np.abs(moved.values - gaussian(SMALL_GRID, (sx, sy)).values).max() < 1e-10
    assert np.abs(translate(moved, (-sx, -sy)).values - f.values).max() < 1e-12


def test_sample_spectral_between_nodes() -> None:
    f = gaussian(SMALL_GRID, (0.3, 0.2))
    points = np.array([[0.123, -0.456], [1.77, 0.91], [-2.05, 1.5]])
    exact = np.exp(-((points[:, 0] - 0.3) ** 2 + (points[:, 1] - 0.2) ** 2))
    assert np.abs(sample_spectral(f, points) - exact).max() < 1e-10


def test_half_cosine_cutoff() -> None:
    values = half_cosine_cutoff([-1.0, 0.0, 0.5, 1.0, 2.0], 0.0)
    assert values.tolist() == pytest.approx([0.0, 0.0, 0.5, 1.0, 1.0])


def test_boundary_strip_mass() -> None:
    assert boundary_strip_mass(gaussian(SMALL_GRID), width=2.0) < 1e-20
    ones = Field2D(SMALL_GRID, np.ones(SMALL_GRID.shape))
    inner = (16.0 - 4.0) ** 2
    strip = boundary_strip_mass(ones, width=2.0)
    assert strip == pytest.approx(256.0 - inner, rel=0.05)


def test_place_profile(profile) -> None:
    grid = Grid2D(Lx=32.0, Ly=32.0, Nx=256, Ny=256)
    q = place_profile(profile, grid)
    assert q.values[128, 128] == pytest.approx(profile.q0)
    scaled = place_profile(profile, grid, center=(2.0, -1.0), scale=1.2)
    assert scaled.max_abs == pytest.approx(1.2 * profile.q0)
    lam = place_profile(profile, grid, kind=ProfileKind.LAMBDA)
    assert lam.values[128, 128] == pytest.approx(float(radial_kind(profile, ProfileKind.LAMBDA, 0.0)))
    assert float(radial_kind(profile, ProfileKind.LAMBDA, 0.0)) == pytest.approx(profile.q0)


def test_place_profile_errors(profile) -> None:
    with pytest.raises(BoxTooSmallError):
        place_profile(profile, SMALL_GRID)
    grid = Grid2D(Lx=32.0, Ly=32.0, Nx=256, Ny=256)
    with pytest.raises(ValueError, match="scale"):
        place_profile(profile, grid, scale=0.0)
    with pytest.raises(ValueError, match="outside"):
        place_profile(profile, grid, center=(40.0, 0.0))
