import numpy as np
import pytest

from tests.util import SMALL_GRID, gaussian
from zkcollide.spectral import (
    Axis,
    Field2D,
    Grid2D,
    GridMismatchError,
    ProfileKind,
    derivative,
    h1_norm,
    inner_product,
    place_profile,
)
from zkcollide.spectrum import (
    IllPosedError,
    angular_spread,
    apply_L,
    coercivity_sample,
    kernel_residuals,
    negative_eigenpair,
    random_bumps,
    rayleigh_quotient,
    solve_L,
    tail_plateau,
)

GRID = Grid2D(32, 32, 256, 256)


@pytest.fixture(scope="module")
def q(profile):
    return place_profile(profile, GRID)


@pytest.fixture(scope="module")
def lam(profile):
    return place_profile(profile, GRID, kind=ProfileKind.LAMBDA)


@pytest.fixture(scope="module")
def pair(q):
    return negative_eigenpair(q)


def test_apply_L_on_ground_state(q, constants) -> None:
    # L Q = -Q^2, so <L Q, Q> = -int Q^3 = -3/2 int Q^2
    assert inner_product(apply_L(q, q), q) == pytest.approx(-1.5 * constants.int_q2, rel=1e-6)


def test_apply_L_grid_mismatch(q) -> None:
    with pytest.raises(GridMismatchError):
        apply_L(Field2D.zeros(SMALL_GRID), q)


def test_kernel_residuals(q, lam) -> None:
    report = kernel_residuals(q, lam)
    assert report.dx <= 1e-6
    assert report.dy <= 1e-6
    assert report.scaling <= 1e-5


def test_negative_eigenpair(q, pair) -> None:
    assert pair.residual <= 1e-8
    # the Rayleigh quotient of Q bounds lambda0 from below
    assert 1.5 < pair.lambda0 < 2.0 * q.max_abs
    assert inner_product(pair.chi0, pair.chi0) == pytest.approx(1.0, rel=1e-12)
    assert inner_product(pair.chi0, q) > 0.0


def test_eigenfunction_is_radial(pair) -> None:
    assert angular_spread(pair.chi0, np.array([1.0, 2.0, 3.0])) <= 1e-4


def test_eigenfunction_tail(pair) -> None:
    report = tail_plateau(pair, window=(4.0, 7.0), n=7)
    assert report.kappa0 > 0.0
    assert report.spread <= 0.3


def test_eigen_tolerance_is_capped(q) -> None:
    with pytest.raises(ValueError, match="tol must be at most"):
        negative_eigenpair(q, tol=1e-6)


def test_solve_L_inverts_scaling(q, lam) -> None:
    # L LambdaQ = -Q
    f = solve_L(q, q)
    assert h1_norm(f + lam) <= 1e-5 * h1_norm(lam)


def test_solve_L_round_trip(q) -> None:
    h = gaussian(GRID, width=1.5)
    f = solve_L(h, q)
    residual = apply_L(f, q) - h
    assert inner_product(residual, residual) <= 1e-12 * inner_product(h, h)
    assert abs(inner_product(f, derivative(q, Axis.X))) <= 1e-10


def test_solve_L_zero_input(q) -> None:
    f = solve_L(Field2D.zeros(GRID), q)
    assert f.max_abs == 0.0


def test_solve_L_rejects_kernel_direction(q) -> None:
    with pytest.raises(IllPosedError, match="kernel component"):
        solve_L(derivative(q, Axis.X), q)


def test_coercivity_on_the_orthogonal_complement(q) -> None:
    report = coercivity_sample(q, n_samples=100, seed=3)
    assert report.quotients.shape == (100,)
    assert report.min_quotient > 0.0


def test_coercivity_needs_enough_samples(q) -> None:
    with pytest.raises(ValueError, match="at least 100"):
        coercivity_sample(q, n_samples=10)


def test_unconstrained_quotient_can_be_negative(q) -> None:
    assert rayleigh_quotient(q, q) < 0.0


def test_random_bumps_are_reproducible() -> None:
    a = random_bumps(GRID, np.random.default_rng(7))
    b = random_bumps(GRID, np.random.default_rng(7))
    assert np.array_equal(a.values, b.values)
    assert a.max_abs > 0.0
