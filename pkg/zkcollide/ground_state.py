"""Radial ground state of -Q'' - Q'/r + Q - Q^2 = 0 and the scalar constants built on it."""

from __future__ import annotations

import enum
import logging
import math
import warnings
from collections.abc import Callable
from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING, NamedTuple

import numpy as np
from scipy import integrate, optimize, special
from scipy.interpolate import BPoly, make_interp_spline

from zkcollide import PROFILE_STEP, R_MAX, RESIDUAL_TOL, ZKLabError
from zkcollide.asymptotics import bessel_k0, estimate_kappa

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

logger = logging.getLogger(__name__)

SERIES_START = 1e-3
MATCH_RADIUS = 8.0
BRACKET = (1.5, 4.0)
MAX_BRACKET_EXPANSIONS = 4
MAX_REFINEMENTS = 3
DECAY_RATIO = 1e-10

_SHOOT_RTOL = 1e-13
_SHOOT_ATOL = 1e-30
# inward shots start here at least, far enough that Q^2 is negligible against Q
_INWARD_START = 30.0
_QUAD_OPTIONS = {"epsabs": 1e-14, "epsrel": 1e-12, "limit": 1000}


class NoBracketError(ZKLabError):
    """The bisection interval does not separate the two shot classes."""

    def __init__(self, message: str = "Initial interval does not bracket Q(0)") -> None:
        """Init."""
        super().__init__(message)


class ToleranceNotMetError(ZKLabError):
    """The tabulated profile violates the residual tolerance."""

    def __init__(self, message: str = "Profile residual above tolerance") -> None:
        """Init."""
        super().__init__(message)


class QuadratureError(ZKLabError):
    """Adaptive quadrature did not converge."""

    def __init__(self, message: str = "Quadrature did not converge") -> None:
        """Init."""
        super().__init__(message)


class ShotClass(enum.StrEnum):
    """Outcome of a single outward shot."""

    CROSSES_ZERO = "crosses-zero"
    DIVERGES = "diverges"
    UNDECIDED = "undecided"


class TailModel(NamedTuple):
    """Continuation kappa * K0(r) of the profile for r > r_max."""

    kappa: float
    model: str = "k0"


@dataclass(frozen=True)
class RadialProfile:
    """Tabulated ground state on uniform nodes 0 = r_0 < ... < r_N = r_max.

    Q(r_max) < 1e-10 Q(0) holds at the default r_max = 30 but not at the smallest accepted
    r_max = 20, where the tail is still about 1e-9 Q(0). The solver only logs a warning for
    it; past r_max the kappa K0 continuation is used either way.
    """

    r_max: float
    nodes: NDArray[np.float64]
    q: NDArray[np.float64]
    dq: NDArray[np.float64]
    d2q: NDArray[np.float64]
    tail: TailModel
    residual_tol: float = RESIDUAL_TOL

    @property
    def step(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    @property
    def q0(self) -> float:
        return float(self.q[0])

    @cached_property
    def interpolant(self) -> BPoly:
        """Quintic Hermite interpolant through (Q, Q', Q'') at the nodes."""
        values = np.column_stack((self.q, self.dq, self.d2q))
        return BPoly.from_derivatives(self.nodes, values.tolist())

    def __hash__(self) -> int:
        return hash((self.r_max, self.nodes.size, self.q0, self.tail.kappa))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RadialProfile):
            return NotImplemented
        return (
            self.r_max == other.r_max
            and self.tail == other.tail
            and np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.q, other.q)
        )


def eval_profile(p: RadialProfile, r: ArrayLike, deriv: int = 0) -> NDArray[np.float64]:
    """Evaluate Q, Q' or Q'' at radii r >= 0.

    Inside the table the quintic Hermite interpolant is used; past r_max the value is
    kappa * K0^(deriv)(r).
    """
    if deriv not in (0, 1, 2):
        msg = f"deriv must be 0, 1 or 2, got {deriv}"
        raise ValueError(msg)
    radii = np.asarray(r, dtype=np.float64)
    if np.any(radii < 0.0):
        msg = "eval_profile needs r >= 0"
        raise ValueError(msg)

    out = np.empty_like(radii)
    inside = radii <= p.r_max
    if inside.any():
        out[inside] = p.interpolant(radii[inside], deriv)
    if (~inside).any():
        out[~inside] = p.tail.kappa * bessel_k0(radii[~inside], deriv)
    return out


def _series_state(q0: float, r: float) -> list[float]:
    c2 = (q0 - q0 * q0) / 4.0
    c4 = (1.0 - 2.0 * q0) * c2 / 16.0
    return [q0 + c2 * r**2 + c4 * r**4, 2.0 * c2 * r + 4.0 * c4 * r**3]


def _radial_rhs(r: float, state: NDArray[np.float64]) -> list[float]:
    q, dq = state
    return [dq, q - q * q - dq / r]


def _second_derivative(r: NDArray[np.float64], q: NDArray[np.float64], dq: NDArray[np.float64]) -> NDArray[np.float64]:
    d2q = np.empty_like(q)
    zero = r == 0.0
    d2q[zero] = (q[zero] - q[zero] ** 2) / 2.0
    d2q[~zero] = q[~zero] - q[~zero] ** 2 - dq[~zero] / r[~zero]
    return d2q


def classify_shot(q0: float, r_end: float) -> ShotClass:
    """Integrate outward from the series start and classify the orbit."""

    def crosses_zero(_r: float, state: NDArray[np.float64]) -> float:
        return float(state[0])

    def turns_up(_r: float, state: NDArray[np.float64]) -> float:
        return float(state[1])

    def runs_away(_r: float, state: NDArray[np.float64]) -> float:
        return float(state[0] - 2.0 * q0)

    for event in (crosses_zero, turns_up, runs_away):
        event.terminal = True  # type: ignore[attr-defined]
    turns_up.direction = 1.0  # type: ignore[attr-defined]

    sol = integrate.solve_ivp(
        _radial_rhs,
        (SERIES_START, r_end),
        _series_state(q0, SERIES_START),
        method="DOP853",
        rtol=_SHOOT_RTOL,
        atol=_SHOOT_ATOL,
        events=(crosses_zero, turns_up, runs_away),
    )
    if sol.t_events[0].size:
        return ShotClass.CROSSES_ZERO
    if sol.t_events[1].size or sol.t_events[2].size:
        return ShotClass.DIVERGES
    return ShotClass.UNDECIDED


def shoot_q0(r_end: float = R_MAX, rel_tol: float = 1e-12) -> float:
    """Bisect Q(0) between orbits that cross zero and orbits that turn back up."""
    lo, hi = BRACKET
    if classify_shot(lo, r_end) is not ShotClass.DIVERGES:
        msg = f"lower end Q(0)={lo} does not turn back up"
        raise NoBracketError(msg)
    for _ in range(MAX_BRACKET_EXPANSIONS + 1):
        if classify_shot(hi, r_end) is ShotClass.CROSSES_ZERO:
            break
        lo, hi = hi, 1.5 * hi
        logger.debug(f"expanding bracket upper end to {hi}")
    else:
        msg = f"no sign change found up to Q(0)={hi}"
        raise NoBracketError(msg)

    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        shot = classify_shot(mid, r_end)
        logger.debug(f"bisection Q(0)={mid:.15f}: {shot}")
        if shot is ShotClass.CROSSES_ZERO:
            hi = mid
        elif shot is ShotClass.DIVERGES:
            lo = mid
        else:
            return mid
    return 0.5 * (lo + hi)


def _outward(q0: float, r_eval: NDArray[np.float64] | None = None) -> integrate.OdeSolution:
    return integrate.solve_ivp(
        _radial_rhs,
        (SERIES_START, MATCH_RADIUS),
        _series_state(q0, SERIES_START),
        method="DOP853",
        rtol=_SHOOT_RTOL,
        atol=_SHOOT_ATOL,
        t_eval=r_eval,
    )


def _inward(kappa: float, r_start: float, r_eval: NDArray[np.float64] | None = None) -> integrate.OdeSolution:
    start = [kappa * float(bessel_k0(r_start)), kappa * float(bessel_k0(r_start, 1))]
    return integrate.solve_ivp(
        _radial_rhs,
        (r_start, MATCH_RADIUS),
        start,
        method="DOP853",
        rtol=_SHOOT_RTOL,
        atol=_SHOOT_ATOL,
        t_eval=r_eval,
    )


def _match(q0: float, kappa_guess: float, r_start: float) -> tuple[float, float]:
    """Solve for (Q(0), kappa) so the outward and inward shots meet at MATCH_RADIUS."""

    def mismatch(params: NDArray[np.float64]) -> list[float]:
        out = _outward(float(params[0])).y[:, -1]
        inn = _inward(float(params[1]), r_start).y[:, -1]
        return [(out[0] - inn[0]) / abs(inn[0]), (out[1] - inn[1]) / abs(inn[1])]

    sol = optimize.root(mismatch, [q0, kappa_guess], method="hybr", options={"xtol": 1e-14})
    if not sol.success:
        msg = f"matched shooting failed: {sol.message}"
        raise ToleranceNotMetError(msg)
    return float(sol.x[0]), float(sol.x[1])


def _tabulate(q0: float, kappa: float, r_max: float, step: float) -> RadialProfile:
    n = round(r_max / step)
    nodes = np.linspace(0.0, r_max, n + 1)
    r_start = max(r_max + 10.0, _INWARD_START)

    lower = nodes[(nodes > 0.0) & (nodes <= MATCH_RADIUS)]
    upper = nodes[nodes > MATCH_RADIUS][::-1]
    out = _outward(q0, lower)
    inn = _inward(kappa, r_start, upper)

    q = np.concatenate(([q0], out.y[0], inn.y[0][::-1]))
    dq = np.concatenate(([0.0], out.y[1], inn.y[1][::-1]))
    d2q = _second_derivative(nodes, q, dq)
    profile = RadialProfile(r_max=r_max, nodes=nodes, q=q, dq=dq, d2q=d2q, tail=TailModel(kappa))
    kappa_local = estimate_kappa(profile).kappa
    return RadialProfile(
        r_max=r_max, nodes=nodes, q=q, dq=dq, d2q=d2q, tail=TailModel(kappa_local)
    )


def ode_residual(p: RadialProfile) -> NDArray[np.float64]:
    """|-Q'' - Q'/r + Q - Q^2| at the nodes, Q'' taken from a quintic spline of Q'."""
    d2q = make_interp_spline(p.nodes, p.dq, k=5).derivative()(p.nodes)
    residual = np.empty_like(p.q)
    residual[0] = -2.0 * d2q[0] + p.q[0] - p.q[0] ** 2
    r = p.nodes[1:]
    residual[1:] = -d2q[1:] - p.dq[1:] / r + p.q[1:] - p.q[1:] ** 2
    return np.abs(residual)


def solve_ground_state(
    residual_tol: float = RESIDUAL_TOL,
    r_max: float = R_MAX,
    *,
    step: float = PROFILE_STEP,
) -> RadialProfile:
    """Solve the radial ground-state equation and tabulate the profile.

    Q(0) is bracketed by bisection, then Q(0) and the tail constant are refined by
    matching an outward shot with an inward shot started on kappa * K0.

    Raises:
        NoBracketError: the bracket does not separate the two orbit classes.
        ToleranceNotMetError: the nodal residual stays above residual_tol.
    """
    if not 0.0 < residual_tol <= 1e-6:  # noqa: PLR2004
        msg = "residual_tol must lie in (0, 1e-6]"
        raise ValueError(msg)
    if r_max < 20.0:  # noqa: PLR2004
        msg = "r_max must be at least 20"
        raise ValueError(msg)

    q0_bisect = shoot_q0(r_end=r_max)
    rough = _outward(q0_bisect, np.array([MATCH_RADIUS]))
    kappa_guess = float(rough.y[0, -1] / bessel_k0(MATCH_RADIUS))
    q0, kappa = _match(q0_bisect, kappa_guess, max(r_max + 10.0, _INWARD_START))
    logger.info(f"Q(0) = {q0:.14f} (bisection {q0_bisect:.14f}), kappa = {kappa:.12f}")

    for refinement in range(MAX_REFINEMENTS + 1):
        profile = _tabulate(q0, kappa, r_max, step)
        worst = float(ode_residual(profile).max())
        logger.debug(f"step {step}: max nodal residual {worst:.3e}")
        if worst <= residual_tol:
            break
        if refinement == MAX_REFINEMENTS:
            msg = f"residual {worst:.3e} above {residual_tol:.1e} at step {step}"
            raise ToleranceNotMetError(msg)
        step /= 2.0

    profile = RadialProfile(
        r_max=profile.r_max,
        nodes=profile.nodes,
        q=profile.q,
        dq=profile.dq,
        d2q=profile.d2q,
        tail=profile.tail,
        residual_tol=residual_tol,
    )
    if np.any(profile.q <= 0.0) or np.any(profile.dq[1:] >= 0.0):
        msg = "profile is not positive and strictly decreasing"
        raise ToleranceNotMetError(msg)
    if profile.q[-1] >= DECAY_RATIO * profile.q0:
        logger.warning(
            f"Q(r_max)/Q(0) = {profile.q[-1] / profile.q0:.2e} is above {DECAY_RATIO:.0e}; "
            "use a larger r_max for placement-grade tails"
        )
    return profile


@dataclass(frozen=True)
class GroundStateConstants:
    """Scalar integrals of Q over the plane."""

    int_q: float
    int_q2: float
    lam_q_q: float
    q3: float
    dxq2: float
    dxinv_dyq_dyq: float
    bessel_q_q: float
    c_q: float
    kappa: float
    c_int: float


def _quad(func: Callable[[float], float], lo: float, hi: float, **options: object) -> float:
    settings = {**_QUAD_OPTIONS, **options}
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, _ = integrate.quad(func, lo, hi, **settings)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(str(exc)) from exc
    return float(value)


def _radial(p: RadialProfile, func: Callable[[float], float]) -> float:
    """2 pi int_0^r_max f(r) r dr, split at every unit radius."""
    points = np.arange(1.0, p.r_max)
    return 2.0 * math.pi * _quad(lambda r: func(r) * r, 0.0, p.r_max, points=points)


def _bessel_pair(p: RadialProfile) -> float:
    """<(-Delta+1)^-1 Q, Q> = 4 pi int K0(r) Q(r) r int_0^r I0(s) Q(s) s ds dr."""

    def rhs(r: float, state: NDArray[np.float64]) -> list[float]:
        q = float(eval_profile(p, r))
        return [float(special.i0(r)) * q * r, float(bessel_k0(r)) * q * r * state[0]]

    r_start = 1e-6
    sol = integrate.solve_ivp(
        rhs,
        (r_start, p.r_max),
        [0.5 * p.q0 * r_start**2, 0.0],
        method="DOP853",
        rtol=1e-12,
        atol=1e-16,
    )
    if not sol.success:
        raise QuadratureError(sol.message)
    return 4.0 * math.pi * float(sol.y[1, -1])


def _transverse_constant(p: RadialProfile) -> float:
    """c_Q = int_0^inf (int_R dy Q dx)^2 dy, the x-integral taken over the whole line."""
    reach = p.r_max + 15.0

    def marginal_slope(y: float) -> float:
        def integrand(x: float) -> float:
            rho = math.hypot(x, y)
            return float(eval_profile(p, rho, 1)) * y / rho

        return 2.0 * _quad(integrand, 0.0, math.sqrt(reach**2 - y**2), points=(1.0, 4.0))

    return _quad(lambda y: marginal_slope(y) ** 2, 0.0, reach - 1.0, points=(1.0, 4.0, 10.0))


def ground_state_constants(p: RadialProfile) -> GroundStateConstants:
    """Compute the constants by radial quadrature with the kappa K0 tail past r_max.

    Raises:
        QuadratureError: an adaptive quadrature failed to converge.
    """

    def q(r: float) -> float:
        return float(eval_profile(p, r))

    def dq(r: float) -> float:
        return float(eval_profile(p, r, 1))

    kappa = estimate_kappa(p).kappa
    tail_mass = 2.0 * math.pi * kappa * p.r_max * -float(bessel_k0(p.r_max, 1))
    int_q = _radial(p, q) + tail_mass
    int_q2 = _radial(p, lambda r: q(r) ** 2)
    lam_q_q = _radial(p, lambda r: (q(r) + 0.5 * r * dq(r)) * q(r))
    q3 = _radial(p, lambda r: q(r) ** 3)
    dxq2 = 0.5 * _radial(p, lambda r: dq(r) ** 2)
    c_q = _transverse_constant(p)
    bessel_q_q = _bessel_pair(p)
    overlap = _radial(p, lambda r: q(r) ** 2 * float(special.i0(r)))
    constants = GroundStateConstants(
        int_q=int_q,
        int_q2=int_q2,
        lam_q_q=lam_q_q,
        q3=q3,
        dxq2=dxq2,
        dxinv_dyq_dyq=-c_q,
        bessel_q_q=bessel_q_q,
        c_q=c_q,
        kappa=kappa,
        c_int=kappa * math.sqrt(math.pi / 2.0) * overlap,
    )
    logger.info(
        f"int Q = {int_q:.12f}, <LQ,Q> = {lam_q_q:.12f}, |Q|_3^3 = {q3:.12f}, "
        f"c_Q = {c_q:.10f}, c = {constants.c_int:.10f}"
    )
    return constants
