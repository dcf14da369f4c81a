import math

import numpy as np
import pytest

from tests.util import gaussian
from zkcollide.evolution import (
    BlowUpError,
    EvolutionConfig,
    Scheme,
    Stepper,
    _contour_means,
    evolve,
    invariants_of,
    momentum_center,
    step,
    zk_energy,
)
from zkcollide.spectral import Field2D, Grid2D, h1_norm, place_profile

GRID = Grid2D(32, 32, 256, 256)


@pytest.fixture(scope="module")
def soliton(profile):
    return place_profile(profile, GRID)


@pytest.fixture(scope="module")
def moving(profile):
    return place_profile(profile, GRID, scale=1.1)


def test_config_validation() -> None:
    with pytest.raises(ValueError, match="dt must be positive"):
        EvolutionConfig(dt=0.0)
    with pytest.raises(ValueError, match="snapshot_every"):
        EvolutionConfig(snapshot_every=0)
    with pytest.raises(ValueError, match="cfl_guard"):
        EvolutionConfig(cfl_guard=-1.0)


def test_stability_number() -> None:
    EvolutionConfig(dt=0.01).validate(GRID)
    with pytest.raises(ValueError, match="stability number"):
        EvolutionConfig(dt=0.02).validate(GRID)
    assert EvolutionConfig(dealias=False).stability_number(GRID) > EvolutionConfig().stability_number(GRID)


def test_steps_between() -> None:
    config = EvolutionConfig(dt=0.01)
    assert config.steps_between(0.0, 1.0) == 100
    assert config.steps_between(1.0, 0.0) == 100
    assert config.steps_between(-0.5, 0.25) == 75
    with pytest.raises(ValueError, match="whole number of steps"):
        config.steps_between(0.0, 0.015)


def test_stepper_needs_a_step() -> None:
    with pytest.raises(ValueError, match="non-zero"):
        Stepper(GRID, 0.0)


@pytest.mark.parametrize("scheme", list(Scheme))
def test_ground_state_is_stationary(soliton, scheme: Scheme) -> None:
    run = evolve(soliton, EvolutionConfig(dt=0.005, t_end=1.0, snapshot_every=100, scheme=scheme))
    assert run.t_final == 1.0
    assert h1_norm(run.final - soliton) <= 1e-6 * h1_norm(soliton)
    assert run.mass_drift <= 1e-6
    assert run.energy_drift <= 1e-6


def test_mean_is_exactly_conserved(moving) -> None:
    run = evolve(moving, EvolutionConfig(dt=0.01, t_end=0.5, snapshot_every=10))
    means = np.array([r.mean for r in run.invariants])
    assert np.abs(means - means[0]).max() <= 1e-10 * abs(means[0])


def test_soliton_travels_at_its_speed(moving) -> None:
    run = evolve(moving, EvolutionConfig(dt=0.01, t_end=2.0, snapshot_every=100))
    x0, y0 = momentum_center(moving)
    x1, y1 = momentum_center(run.final)
    assert x1 - x0 == pytest.approx(0.2, abs=1e-4)
    assert y1 == pytest.approx(y0, abs=1e-8)
    assert run.mass_drift <= 1e-6


def test_callbacks_see_start_snapshots_and_end(soliton) -> None:
    seen = []
    run = evolve(
        soliton,
        EvolutionConfig(dt=0.01, t_end=0.5, snapshot_every=20),
        [lambda t, v: seen.append((t, v.grid))],
        keep_snapshots=False,
    )
    assert [t for t, _ in seen] == pytest.approx([0.0, 0.2, 0.4, 0.5])
    assert all(grid == GRID for _, grid in seen)
    assert run.snapshots == []
    assert len(run.invariants) == 4


def test_backward_run_returns_to_start(moving) -> None:
    forward = evolve(moving, EvolutionConfig(dt=0.0025, t_end=0.5, snapshot_every=200))
    back = evolve(forward.final, EvolutionConfig(dt=0.0025, t_end=0.0, snapshot_every=200), t0=0.5)
    assert [t for t, _ in back.snapshots] == pytest.approx([0.5, 0.0])
    assert h1_norm(back.final - moving) <= 1e-7 * h1_norm(moving)


def test_blow_up_guard(soliton) -> None:
    with pytest.raises(BlowUpError, match="above guard"):
        evolve(soliton, EvolutionConfig(dt=0.01, t_end=0.1, cfl_guard=1.0))
    with pytest.raises(BlowUpError):
        step(soliton, 0.01, cfl_guard=1.0)


def test_single_step_matches_evolve(moving) -> None:
    run = evolve(moving, EvolutionConfig(dt=0.01, t_end=0.01))
    stepped = step(moving, 0.01)
    assert np.abs(run.final.values - stepped.values).max() <= 1e-14


def test_ifrk4_agrees_with_etdrk4(moving) -> None:
    etd = evolve(moving, EvolutionConfig(dt=0.01, t_end=0.2, snapshot_every=20, scheme=Scheme.ETDRK4))
    ifr = evolve(moving, EvolutionConfig(dt=0.01, t_end=0.2, snapshot_every=20, scheme=Scheme.IFRK4))
    assert h1_norm(etd.final - ifr.final) <= 1e-4 * h1_norm(moving)


def test_ground_state_energy(profile, constants, soliton) -> None:
    inv = invariants_of(soliton)
    assert inv.mass == pytest.approx(constants.int_q2, rel=1e-6)
    assert inv.mean == pytest.approx(constants.int_q, rel=1e-6)
    assert inv.energy == pytest.approx(0.25 * constants.int_q2, rel=1e-6)
    assert zk_energy(soliton) == pytest.approx(inv.energy - 0.5 * inv.mass, rel=1e-12)


def test_momentum_center_of_placed_bump(profile) -> None:
    bump = place_profile(profile, GRID, center=(3.0, -2.0))
    cx, cy = momentum_center(bump)
    assert cx == pytest.approx(3.0, abs=1e-8)
    assert cy == pytest.approx(-2.0, abs=1e-8)


def test_small_amplitude_mass_is_conserved() -> None:
    v = gaussian(GRID, width=2.0) * 1e-6
    run = evolve(v, EvolutionConfig(dt=0.01, t_end=0.5, snapshot_every=50))
    assert math.isclose(run.invariants[-1].mass, run.invariants[0].mass, rel_tol=1e-9)


def _phi_closed_form(z: np.ndarray) -> tuple[np.ndarray, ...]:
    e = np.exp(z)
    return (
        (np.exp(z / 2.0) - 1.0) / z,
        (-4.0 - z + e * (4.0 - 3.0 * z + z**2)) / z**3,
        (2.0 + z + e * (z - 2.0)) / z**3,
        (-4.0 - 3.0 * z - z**2 + e * (4.0 - z)) / z**3,
    )


def test_phi_functions_on_the_imaginary_axis() -> None:
    z = 1j * np.array([[0.5, 2.0, 10.0, 40.0, -3.0]])
    for got, want in zip(_contour_means(z), _phi_closed_form(z), strict=True):
        np.testing.assert_allclose(got, want, rtol=1e-10)


def test_phi_functions_at_zero() -> None:
    half, f1, f2, f3 = _contour_means(np.zeros((1, 1), dtype=np.complex128))
    assert complex(half[0, 0]) == pytest.approx(0.5, abs=1e-13)
    for f in (f1, f2, f3):
        assert complex(f[0, 0]) == pytest.approx(1.0 / 6.0, abs=1e-13)


@pytest.mark.parametrize("scheme", list(Scheme))
def test_halving_dt_is_fourth_order(scheme: Scheme) -> None:
    v0 = gaussian(GRID, width=2.0)

    def final(dt: float) -> Field2D:
        return evolve(v0, EvolutionConfig(dt=dt, t_end=0.4, snapshot_every=1000, scheme=scheme)).final

    reference = final(0.00125)
    coarse = h1_norm(final(0.01) - reference)
    fine = h1_norm(final(0.005) - reference)
    assert coarse > 1e-11
    assert coarse / fine >= 8.0


def test_zero_field_stays_zero() -> None:
    zero = gaussian(GRID) * 0.0
    for scheme in Scheme:
        assert np.all(step(zero, 0.01, scheme=scheme).values == 0.0)


def test_energy_scales_with_speed_squared(soliton, profile) -> None:
    faster = place_profile(profile, GRID, scale=1.2)
    assert zk_energy(faster) == pytest.approx(1.44 * zk_energy(soliton), rel=1e-5)
