import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zkcollide.asymptotics import bessel_k0
from zkcollide.ground_state import (
    DECAY_RATIO,
    R_MAX,
    ShotClass,
    classify_shot,
    eval_profile,
    ode_residual,
    solve_ground_state,
)


def test_profile_shape(profile) -> None:
    assert 2.0 < profile.q0 < 3.0
    assert profile.r_max == R_MAX
    assert np.all(profile.q > 0.0)
    assert np.all(profile.dq[1:] < 0.0)
    assert profile.dq[0] == 0.0


def test_nodal_residual_within_tolerance(profile) -> None:
    assert float(ode_residual(profile).max()) <= profile.residual_tol


def test_tail_continues_the_table(profile) -> None:
    inside = float(eval_profile(profile, profile.r_max))
    outside = float(eval_profile(profile, profile.r_max + 1e-9))
    assert outside == pytest.approx(inside, rel=1e-4)
    assert float(eval_profile(profile, 40.0)) == pytest.approx(profile.tail.kappa * float(bessel_k0(40.0)))


def test_tail_decay_at_the_default_radius(profile) -> None:
    assert profile.q[-1] < DECAY_RATIO * profile.q0


def test_short_radius_only_warns(caplog: pytest.LogCaptureFixture) -> None:
    short = solve_ground_state(r_max=20.0)
    assert short.q[-1] >= DECAY_RATIO * short.q0
    assert float(eval_profile(short, 25.0)) == pytest.approx(short.tail.kappa * float(bessel_k0(25.0)))
    # records reach caplog through the queue listener thread
    deadline = time.monotonic() + 2.0
    while "use a larger r_max" not in caplog.text and time.monotonic() < deadline:
        time.sleep(0.01)
    assert "use a larger r_max" in caplog.text


def test_shots_around_q0(profile) -> None:
    assert classify_shot(1.5, profile.r_max) is ShotClass.DIVERGES
    assert classify_shot(1.01 * profile.q0, profile.r_max) is ShotClass.CROSSES_ZERO


@settings(deadline=None, max_examples=25)
@given(r=st.floats(min_value=0.5, max_value=25.0))
def test_interpolant_derivatives_are_consistent(profile, r: float) -> None:
    h = 1e-4
    numeric = (eval_profile(profile, r + h) - eval_profile(profile, r - h)) / (2.0 * h)
    assert float(eval_profile(profile, r, 1)) == pytest.approx(float(numeric[()]), rel=1e-6, abs=1e-12)


def test_eval_profile_on_arrays_inside_the_table(profile) -> None:
    radii = np.array([0.0, 1.0, 5.0])
    values = eval_profile(profile, radii)
    assert values.shape == (3,)
    assert values[0] == pytest.approx(profile.q0, rel=1e-12)
    assert np.all(np.diff(values) < 0.0)
    nodes = profile.nodes[::100]
    np.testing.assert_allclose(eval_profile(profile, nodes), profile.q[::100], rtol=1e-12)
    np.testing.assert_allclose(eval_profile(profile, nodes, 1), profile.dq[::100], rtol=1e-12, atol=1e-15)
    grid = eval_profile(profile, np.full((2, 3), 1.0))
    assert grid.shape == (2, 3)


def test_eval_profile_rejects_bad_input(profile) -> None:
    with pytest.raises(ValueError, match="deriv"):
        eval_profile(profile, 1.0, 3)
    with pytest.raises(ValueError, match="r >= 0"):
        eval_profile(profile, -0.5)


def test_solver_rejects_loose_settings() -> None:
    with pytest.raises(ValueError, match="residual_tol"):
        solve_ground_state(residual_tol=1e-4)
    with pytest.raises(ValueError, match="r_max"):
        solve_ground_state(r_max=10.0)


def test_integral_identities(constants) -> None:
    # int Q^2 = int Q, <LambdaQ, Q> = int Q / 2, int Q^3 = 3/2 int Q^2, int (dxQ)^2 = int Q^2 / 4
    assert constants.int_q2 == pytest.approx(constants.int_q, rel=1e-6)
    assert constants.lam_q_q == pytest.approx(0.5 * constants.int_q, rel=1e-6)
    assert constants.q3 == pytest.approx(1.5 * constants.int_q2, rel=1e-5)
    assert constants.dxq2 == pytest.approx(0.25 * constants.int_q2, rel=1e-5)


def test_remaining_constants(profile, constants) -> None:
    assert 0.0 < constants.bessel_q_q < constants.int_q2
    assert constants.c_q > 0.0
    assert constants.dxinv_dyq_dyq == -constants.c_q
    assert constants.c_int > 0.0
    assert constants.kappa == pytest.approx(profile.tail.kappa, rel=1e-3)
