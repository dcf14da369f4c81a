import math
from types import SimpleNamespace

import numpy as np
import pytest

from zkcollide.ansatz import ModulationState, build_ansatz
from zkcollide.experiments import orthogonal_perturbation
from zkcollide.modulation import (
    RECORD_HEADER,
    Functional,
    LossOfLockError,
    ModulationRecord,
    TrustRegionError,
    coercivity_ratio,
    constraints,
    energy_functionals,
    fit_parameters,
    jacobian_check,
    q_h1_norm,
    rate_diagnostics,
    track,
    transverse_cutoff,
    transverse_drift,
    transverse_functionals,
    transverse_weights,
    weight_psi,
    weight_psi_derivatives,
    weights,
)
from zkcollide.spectral import Field2D, Grid2D, h1_norm, inner_product, place_profile
from zkcollide.spectrum import random_bumps

GRID = Grid2D(Lx=48.0, Ly=32.0, Nx=512, Ny=256)
TRUE_STATE = ModulationState(z1=6.0, z2=-6.0, w1=0.3, w2=-0.3, mu1=0.05, mu2=-0.05)
GUESS = ModulationState(z1=6.05, z2=-5.96, w1=0.26, w2=-0.33, mu1=0.04, mu2=-0.04)


@pytest.fixture(scope="module")
def bundle(profile, constants, kernel):
    return build_ansatz(TRUE_STATE, GRID, profile, constants, source=kernel)


@pytest.fixture(scope="module")
def target(bundle):
    return bundle.V


@pytest.fixture(scope="module")
def orthogonal_eps(bundle):
    tests = [f for frame in bundle.frames for f in (frame.dx, frame.dy, frame.R)]
    noise = random_bumps(GRID, np.random.default_rng(7), n_bumps=6, reach=(12.0, 8.0))
    eps = orthogonal_perturbation(tests, noise)
    return eps * (1e-3 / h1_norm(eps))


def test_q_h1_norm_matches_the_grid(profile, constants) -> None:
    assert h1_norm(place_profile(profile, Grid2D(32, 32, 256, 256))) == pytest.approx(
        q_h1_norm(constants), rel=1e-6
    )


def test_fit_recovers_the_parameters(profile, constants, kernel, target) -> None:
    fit = fit_parameters(target, GUESS, profile, constants, source=kernel)
    assert np.abs(fit.state.as_vector() - TRUE_STATE.as_vector()).max() <= 1e-10
    assert np.abs(fit.residuals).max() <= 1e-11 * constants.int_q2
    assert h1_norm(fit.eps) <= 1e-6
    assert fit.iterations >= 1


def test_fit_at_the_answer_takes_no_steps(profile, constants, kernel, target) -> None:
    fit = fit_parameters(target, TRUE_STATE, profile, constants, source=kernel)
    assert fit.iterations == 0
    assert fit.state == TRUE_STATE


def test_fit_refuses_fields_outside_the_tube(profile, constants, kernel) -> None:
    with pytest.raises(TrustRegionError, match="above trust radius"):
        fit_parameters(Field2D.zeros(GRID), GUESS, profile, constants, source=kernel)


def test_jacobian_matches_finite_differences(profile, constants, kernel, target) -> None:
    assert jacobian_check(target, GUESS, profile, constants, source=kernel) <= 1e-6


def test_fit_through_an_orthogonal_perturbation(profile, constants, kernel, target, orthogonal_eps) -> None:
    w = target + orthogonal_eps
    fit = fit_parameters(w, GUESS, profile, constants, source=kernel)
    assert np.abs(fit.state.as_vector() - TRUE_STATE.as_vector()).max() <= 1e-8
    assert h1_norm(fit.eps) == pytest.approx(1e-3, rel=1e-4)
    refit = fit_parameters(w, fit.state, profile, constants, source=kernel)
    assert refit.iterations == 0
    assert np.abs(refit.state.as_vector() - fit.state.as_vector()).max() <= 1e-12


def _shift_x(field: Field2D, cells: int) -> Field2D:
    """Translate by ``cells`` grid steps toward +x; the left edge keeps its plateau row."""
    values = np.empty_like(field.values)
    values[cells:] = field.values[:-cells]
    values[:cells] = field.values[:1]
    return Field2D(field.grid, values)


def test_fit_follows_a_translation(profile, constants, kernel, target) -> None:
    cells = 4
    a = cells * GRID.dx
    moved = ModulationState(
        z1=TRUE_STATE.z1 + a, z2=TRUE_STATE.z2 + a, w1=TRUE_STATE.w1, w2=TRUE_STATE.w2, mu1=0.05, mu2=-0.05
    )
    start = ModulationState(z1=GUESS.z1 + a, z2=GUESS.z2 + a, w1=GUESS.w1, w2=GUESS.w2, mu1=0.04, mu2=-0.04)
    fit = fit_parameters(_shift_x(target, cells), start, profile, constants, source=kernel)
    assert np.abs(fit.state.as_vector() - moved.as_vector()).max() <= 1e-8
    assert fit.state.mu1 == pytest.approx(TRUE_STATE.mu1, abs=1e-8)
    assert fit.state.z == pytest.approx(TRUE_STATE.z, abs=1e-8)


def test_orthogonal_perturbation_meets_the_constraints(bundle, orthogonal_eps) -> None:
    assert np.abs(constraints(orthogonal_eps, bundle)).max() <= 1e-14
    assert h1_norm(orthogonal_eps) == pytest.approx(1e-3)


def test_coercivity_ratio(bundle, orthogonal_eps) -> None:
    ratio = coercivity_ratio(orthogonal_eps, bundle)
    # F_- is at most about |eps|_H1^2 / 2 here
    assert 1.0 < ratio < 20.0


def test_transverse_weights_are_bounded(bundle, orthogonal_eps) -> None:
    frames = bundle.frames
    scaled = []
    for mu0 in (0.1, 0.05):
        ks = transverse_weights(bundle, mu0)
        for k, frame in zip(ks, frames, strict=True):
            row_sup = float(np.abs(frame.dy.values).sum(axis=0).max()) * GRID.dx
            assert k.max_abs <= 1.01 * row_sup
            assert np.all(k.values[GRID.x >= 2.0 / mu0] == 0.0)
        scaled.append(math.sqrt(mu0) * max(math.sqrt(inner_product(k, k)) for k in ks))
        values = transverse_functionals(orthogonal_eps, bundle, mu0)
        for value, k in zip(values, ks, strict=True):
            assert abs(value) <= math.sqrt(inner_product(k, k) * inner_product(orthogonal_eps, orthogonal_eps)) * (
                1.0 + 1e-12
            )
    assert 0.5 <= scaled[0] / scaled[1] <= 2.0
    assert transverse_functionals(Field2D.zeros(GRID), bundle, 0.1) == (0.0, 0.0)


def test_weight_psi() -> None:
    assert weight_psi(0.0) == pytest.approx(0.5)
    assert weight_psi(1e3) == pytest.approx(1.0)
    assert weight_psi(-1e3) == pytest.approx(0.0, abs=1e-12)
    x = np.linspace(-100.0, 100.0, 201)
    first, second = weight_psi_derivatives(x, rho=0.02)
    h = 1e-4
    numeric = (weight_psi(x + h, rho=0.02) - weight_psi(x - h, rho=0.02)) / (2.0 * h)
    assert np.abs(first - numeric).max() <= 1e-9
    numeric_second = (weight_psi_derivatives(x + h, rho=0.02)[0] - weight_psi_derivatives(x - h, rho=0.02)[0]) / (
        2.0 * h
    )
    assert np.abs(second - numeric_second).max() <= 1e-9


def test_weights_for_equal_speeds() -> None:
    psi = weights(ModulationState(z1=5.0, z2=-5.0), GRID)
    assert np.abs(psi.plus).max() == 0.0
    assert np.allclose(psi.minus_e, 1.0)
    assert np.abs(psi.minus_m).max() == 0.0


def test_functionals_vanish_without_remainder(profile, constants, kernel) -> None:
    bundle = build_ansatz(TRUE_STATE, GRID, profile, constants, source=kernel)
    zero = Field2D.zeros(GRID)
    assert energy_functionals(zero, bundle, Functional.PLUS) == 0.0
    assert energy_functionals(zero, bundle, "minus") == 0.0


def test_transverse_cutoff() -> None:
    values = transverse_cutoff(np.array([-50.0, 0.0, 10.0, 15.0, 20.0, 30.0]), mu0=0.1)
    assert values.tolist() == pytest.approx([1.0, 1.0, 1.0, 0.5, 0.0, 0.0])


def test_track_static_snapshots(profile, constants, kernel, target) -> None:
    records = track([(0.0, target), (1.0, target), (2.0, target)], GUESS, profile, constants, source=kernel)
    assert [r.t for r in records] == [0.0, 1.0, 2.0]
    for record in records:
        assert record.gamma.z == pytest.approx(TRUE_STATE.z, abs=1e-7)
        assert record.eps_h1 <= 1e-6
        assert len(record.as_row()) == len(RECORD_HEADER)


def test_track_loses_lock(profile, constants, kernel, target) -> None:
    with pytest.raises(LossOfLockError, match="after 1 records") as info:
        track([(0.0, target), (0.5, Field2D.zeros(GRID))], GUESS, profile, constants, source=kernel)
    assert len(info.value.records) == 1


def _record(t: float, state: ModulationState, k1: float = 0.0) -> ModulationRecord:
    return ModulationRecord(
        t=t,
        gamma=state,
        eps_h1=0.0,
        eps_l2=0.0,
        ortho_residuals=(0.0,) * 6,
        f_plus=0.0,
        f_minus=0.0,
        k1=k1,
        k2=0.0,
    )


class _ConstantSource:
    def coefficients(self, z):
        return SimpleNamespace(z=z, alpha1=0.1, alpha2=0.1, beta1=0.0, beta2=0.0, gamma1=0.2, gamma2=-0.2)

    def derivatives(self, z):
        return 0.0, 0.0


def test_rate_diagnostics() -> None:
    records = [
        _record(t, ModulationState(z1=6.0 + 0.01 * t, z2=-6.0 - 0.01 * t, mu1=0.01, mu2=-0.01 + 0.002 * t))
        for t in (0.0, 1.0, 2.0, 3.0)
    ]
    rates = rate_diagnostics(records, _ConstantSource())
    assert [r.t for r in rates] == [1.0, 2.0]
    for rate in rates:
        assert rate.m1 == pytest.approx((0.1, 0.0, 0.2))
        assert rate.m2 == pytest.approx((0.1 + 0.002 * rate.t, 0.0, 0.002 - 0.2))


def test_transverse_drift() -> None:
    records = [
        _record(t, ModulationState(z1=6.0, z2=-6.0, w1=0.1 * t), k1=2.5 * 0.1 * t + 7.0) for t in range(5)
    ]
    report = transverse_drift(records, c_q=2.0)
    assert report.slope == pytest.approx(2.5)
    assert report.relative_error == pytest.approx(0.25)


def test_transverse_drift_errors() -> None:
    state = ModulationState(z1=6.0, z2=-6.0)
    with pytest.raises(ValueError, match="three records"):
        transverse_drift([_record(0.0, state), _record(1.0, state)], c_q=1.0)
    with pytest.raises(ValueError, match="does not move"):
        transverse_drift([_record(float(t), state) for t in range(3)], c_q=1.0)
