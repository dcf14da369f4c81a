"""The reduced distance ODE Z'' = (2/<LambdaQ,Q>) G(Z) and its Hamiltonian phase portrait."""

from __future__ import annotations

import dataclasses
import enum
import functools
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING, NamedTuple

import numpy as np
from more_itertools import first_true
from scipy import integrate, optimize
from scipy.interpolate import CubicHermiteSpline

from zkcollide import BIG_M, ETA, RHO, Z_STAR, ZKLabError
from zkcollide.interaction import InteractionTable, SeparationTooSmallError, interaction_pair

if TYPE_CHECKING:
    from collections.abc import Callable

    from numpy.typing import ArrayLike, NDArray

    from zkcollide.ground_state import GroundStateConstants, RadialProfile

logger = logging.getLogger(__name__)

CORE_STEP = 0.1
TAIL_FORCE_RATIO = 1e-6
SEPARATRIX_RTOL = 1e-10
_MAX_Z0_SEARCH = 700.0


class HypothesisViolationError(ZKLabError):
    """A trajectory or sample set falls outside the regime the Z comparison argument needs."""

    def __init__(self, message: str = "Energy sandwich violated") -> None:
        """Init."""
        super().__init__(message)


class OrbitClass(enum.StrEnum):
    """Orbits of the phase portrait."""

    FIXED_POINT = "fixed-point"
    SEPARATRIX = "separatrix"
    ABOVE_SEPARATRIX = "above-separatrix"
    INTERIOR = "interior"


class TimeDirection(enum.StrEnum):
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass(frozen=True, eq=False)
class ZModel:
    """Right-hand side and potential of the distance ODE.

    Separations at or above the table start use the table; the core [0, z_min) is
    interpolated from direct quadrature on demand. F is even and G is odd in z.
    """

    table: InteractionTable
    constants: GroundStateConstants
    profile: RadialProfile

    @property
    def kappa_h(self) -> float:
        return 2.0 / self.constants.lam_q_q

    @property
    def separatrix_level(self) -> float:
        """2 kappa |Q|_3^3, the value of 2H on the orbits through Z = 0 at rest."""
        return 2.0 * self.kappa_h * self.constants.q3

    @cached_property
    def _core(self) -> CubicHermiteSpline:
        nodes = np.arange(0.0, self.table.z_min + 0.5 * CORE_STEP, CORE_STEP)
        nodes[-1] = self.table.z_min
        pairs = [interaction_pair(float(z), self.profile) for z in nodes]
        f = np.array([pair.F for pair in pairs])
        g = np.array([pair.G for pair in pairs])
        g[0] = 0.0
        logger.debug(f"core interpolant on [0, {self.table.z_min}] with {nodes.size} nodes")
        return CubicHermiteSpline(nodes, f, -g)

    def overlap(self, z: ArrayLike) -> NDArray[np.float64]:
        """F(z) for any real z."""
        a = np.abs(np.atleast_1d(np.asarray(z, dtype=np.float64)))
        out = np.empty_like(a)
        core = a < self.table.z_min
        if core.any():
            out[core] = self._core(a[core])
        if (~core).any():
            out[~core] = self.table.overlap(a[~core])
        return out

    def attraction(self, z: ArrayLike) -> NDArray[np.float64]:
        """G(z) = -F'(z) for any real z."""
        values = np.atleast_1d(np.asarray(z, dtype=np.float64))
        a = np.abs(values)
        out = np.empty_like(a)
        core = a < self.table.z_min
        if core.any():
            out[core] = -self._core(a[core], 1)
        if (~core).any():
            out[~core] = self.table.attraction(a[~core])
        return np.sign(values) * out

    def force(self, z: float, nu: float = 0.0) -> float:
        return (1.0 + nu) * self.kappa_h * float(self.attraction(z)[0])


def hamiltonian(model: ZModel, y0: ArrayLike, y1: ArrayLike, nu: float = 0.0) -> NDArray[np.float64]:
    """H_nu(Y0, Y1) = Y1^2 / 2 + (1 + nu) (2 / <LambdaQ, Q>) F(Y0)."""
    y0_arr = np.asarray(y0, dtype=np.float64)
    y1_arr = np.asarray(y1, dtype=np.float64)
    potential = model.overlap(y0_arr.ravel()).reshape(y0_arr.shape)
    return 0.5 * y1_arr**2 + (1.0 + nu) * model.kappa_h * potential


def leading_order_force(model: ZModel, z: ArrayLike) -> NDArray[np.float64]:
    """c_int kappa_H e^-z / sqrt(z), the large-separation law of the right-hand side."""
    values = np.asarray(z, dtype=np.float64)
    return model.constants.c_int * model.kappa_h * np.exp(-values) / np.sqrt(values)


def force_ratio(model: ZModel, z: ArrayLike) -> NDArray[np.float64]:
    """Tabulated right-hand side over its leading-order law."""
    values = np.atleast_1d(np.asarray(z, dtype=np.float64))
    return model.kappa_h * model.attraction(values) / leading_order_force(model, values)


def mu0_from_z0(model: ZModel, z0: float, *, z_star: float = Z_STAR) -> float:
    """Half asymptotic velocity of the even trajectory with minimum separation z0.

    Raises:
        SeparationTooSmallError: z0 below Z*.
    """
    if z0 < z_star:
        msg = f"Z0 = {z0} below Z* = {z_star}"
        raise SeparationTooSmallError(msg)
    return math.sqrt(0.5 * model.kappa_h * float(model.overlap(z0)[0]))


def z0_from_mu0(model: ZModel, mu0: float, *, z_min: float = Z_STAR) -> float:
    """Inverse of ``mu0_from_z0`` by bracketing on the monotone overlap over [z_min, inf)."""
    if mu0 <= 0.0:
        msg = f"mu0 must be positive, got {mu0}"
        raise ValueError(msg)
    target = math.log(mu0)

    def gap(z: float) -> float:
        return 0.5 * math.log(0.5 * model.kappa_h * float(model.overlap(z)[0])) - target

    lo = z_min
    if gap(lo) < 0.0:
        msg = f"mu0 = {mu0} above the value reached at Z0 = {lo}"
        raise ValueError(msg)
    hi = max(2.0 * lo, model.table.z_max)
    while gap(hi) > 0.0:
        if hi > _MAX_Z0_SEARCH:
            msg = f"mu0 = {mu0} too small to invert"
            raise ValueError(msg)
        hi *= 2.0
    return float(optimize.brentq(gap, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps))


class Asymptote(NamedTuple):
    """Z(t) ~ slope t + intercept for large t, with the rate of the exponential correction."""

    slope: float
    intercept: float
    decay_rate: float
    window_start: float


@dataclass(frozen=True, eq=False)
class ZTrajectory:
    """Even solution sampled on [-t_end, t_end], with dense output for t >= 0."""

    t: NDArray[np.float64]
    z: NDArray[np.float64]
    zdot: NDArray[np.float64]
    mu0: float
    z0: float
    nu: float
    h_log: NDArray[np.float64]
    solution: integrate.OdeSolution
    model: ZModel
    l_offset: float | None = None

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def h_drift(self) -> float:
        """max |H - H(Z0, 0)| / H(Z0, 0) over the samples."""
        return float(np.abs(self.h_log / self.h_log[self.t.size // 2] - 1.0).max())

    def state_at(self, t: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """(Z, Z') at arbitrary times in [-t_end, t_end], using evenness."""
        times = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if np.any(np.abs(times) > self.t_end * (1.0 + 1e-12)):
            msg = f"time outside [-{self.t_end}, {self.t_end}]"
            raise ValueError(msg)
        values = self.solution(np.minimum(np.abs(times), self.t_end))
        return values[0], np.sign(times) * values[1]


def _mirror(values: NDArray[np.float64], sign: float) -> NDArray[np.float64]:
    return np.concatenate((sign * values[:0:-1], values))


def integrate_Z(  # noqa: N802
    model: ZModel,
    z0: float,
    t_end: float,
    tol: float = 1e-10,
    *,
    nu: float = 0.0,
    z_star: float = Z_STAR,
) -> ZTrajectory:
    """Integrate Z'' = (1+nu) kappa_H G(Z) from (z0, 0) forward and mirror to negative times.

    Raises:
        SeparationTooSmallError: z0 below Z*.
        TableRangeError: z0 below the table start.
    """
    if z0 < z_star:
        msg = f"Z0 = {z0} below Z* = {z_star}"
        raise SeparationTooSmallError(msg)
    if tol > 1e-9:  # noqa: PLR2004
        msg = f"tol must be at most 1e-9, got {tol}"
        raise ValueError(msg)
    if t_end <= 0.0:
        msg = "t_end must be positive"
        raise ValueError(msg)

    def rhs(_t: float, state: NDArray[np.float64]) -> list[float]:
        return [float(state[1]), model.force(float(state[0]), nu)]

    h0 = float(hamiltonian(model, z0, 0.0, nu))
    mu0 = math.sqrt(0.5 * h0)
    rtol = max(tol * 1e-3, 1e-13)
    sol = integrate.solve_ivp(
        rhs,
        (0.0, t_end),
        [z0, 0.0],
        method="DOP853",
        rtol=rtol,
        atol=[rtol * z0, rtol * mu0],
        dense_output=True,
    )
    if not sol.success:
        msg = f"Z integration failed: {sol.message}"
        raise RuntimeError(msg)

    h_forward = hamiltonian(model, sol.y[0], sol.y[1], nu)
    trajectory = ZTrajectory(
        t=_mirror(sol.t, -1.0),
        z=_mirror(sol.y[0], 1.0),
        zdot=_mirror(sol.y[1], -1.0),
        mu0=mu0,
        z0=z0,
        nu=nu,
        h_log=_mirror(h_forward, 1.0),
        solution=sol.sol,
        model=model,
    )
    logger.info(
        f"Z trajectory: Z0 = {z0}, mu0 = {mu0:.6e}, {sol.t.size} steps, "
        f"H drift {trajectory.h_drift:.2e}"
    )
    if float(model.overlap(sol.y[0, -1])[0]) <= TAIL_FORCE_RATIO * mu0**2:
        fit = asymptote(trajectory)
        return dataclasses.replace(trajectory, l_offset=fit.intercept)
    return trajectory


def asymptote(traj: ZTrajectory) -> Asymptote:
    """Fit Z(t) - 2 mu0 t on the tail where F(Z) <= 1e-6 mu0^2.

    The offset relaxes to its limit like a decaying exponential; the fit reports the limit
    and the rate.
    """
    forward = traj.t >= 0.0
    t = traj.t[forward]
    z = traj.z[forward]
    in_tail = traj.model.overlap(z) <= TAIL_FORCE_RATIO * traj.mu0**2
    start = first_true(range(t.size), default=None, pred=lambda i: bool(in_tail[i]))
    if start is None or t.size - start < 4:  # noqa: PLR2004
        msg = "trajectory too short for the asymptotic regime; increase t_end"
        raise ValueError(msg)
    t_tail, z_tail = t[start:], z[start:]
    slope, _ = np.polyfit(t_tail, z_tail, 1)
    offset = z_tail - 2.0 * traj.mu0 * t_tail

    def model(tt: NDArray[np.float64], limit: float, amp: float, rate: float) -> NDArray[np.float64]:
        return limit + amp * np.exp(-rate * (tt - t_tail[0]))

    guess = (float(offset[-1]), float(offset[0] - offset[-1]), 2.0 * traj.mu0)
    try:
        params, _ = optimize.curve_fit(model, t_tail, offset, p0=guess, maxfev=10000)
        limit, rate = float(params[0]), float(params[2])
    except RuntimeError:
        logger.warning("exponential fit of the asymptote did not converge; using the last offset")
        limit, rate = guess[0], math.nan
    return Asymptote(slope=float(slope), intercept=limit, decay_rate=rate, window_start=float(t_tail[0]))


class CharacteristicTimes(NamedTuple):
    """Level-crossing times of the trajectory.

    T3 and T4 are 0 when their level already holds at t = 0; ``clamped`` names them.
    """

    T1: float
    T2: float
    T3: float
    T4: float
    clamped: tuple[str, ...] = ()


def _level_time(traj: ZTrajectory, gap: Callable[[float], float], what: str) -> float:
    t = traj.t[traj.t >= 0.0]
    values = np.array([gap(float(z)) for z in traj.z[traj.t >= 0.0]])
    crossing = first_true(range(1, t.size), default=None, pred=lambda i: values[i - 1] * values[i] <= 0.0)
    if crossing is None:
        msg = f"{what} not reached before t_end = {traj.t_end}"
        raise HypothesisViolationError(msg)

    def along(s: float) -> float:
        return gap(float(traj.solution(s)[0]))

    return float(optimize.brentq(along, t[crossing - 1], t[crossing], xtol=1e-12, rtol=1e-14))


def characteristic_times(
    traj: ZTrajectory, rho: float = RHO, eta: float = ETA, big_m: float = BIG_M
) -> CharacteristicTimes:
    """T1: Z = Z0/rho; T2: Z = Z0 + eta^2; T3, T4: mu0^2 = Z0 (M) Z^-1/2 e^-Z.

    The T3 and T4 levels decrease along the outgoing branch. When one is already
    below mu0^2 at Z0 its time is clamped to 0 and listed in ``clamped``.

    Raises:
        HypothesisViolationError: a level is not reached before t_end, or an unclamped
            T3/T4 falls outside (T2, T1).
    """
    if not 0.0 < rho < 1.0 / 32.0:
        msg = f"rho must lie in (0, 1/32), got {rho}"
        raise ValueError(msg)
    if eta <= 0.0:
        msg = "eta must be positive"
        raise ValueError(msg)
    if big_m <= 10.0:  # noqa: PLR2004
        msg = f"M must exceed 10, got {big_m}"
        raise ValueError(msg)
    z0 = traj.z0
    log_mu2 = 2.0 * math.log(traj.mu0)

    def level_law(factor: float) -> Callable[[float], float]:
        return lambda z: math.log(z0 * factor) - 0.5 * math.log(z) - z - log_mu2

    t1 = _level_time(traj, lambda z: z - z0 / rho, "Z = Z0/rho")
    t2 = _level_time(traj, lambda z: z - z0 - eta**2, "Z = Z0 + eta^2")
    levels: dict[str, float] = {}
    clamped: list[str] = []
    for name, factor in (("T3", 1.0), ("T4", big_m)):
        gap = level_law(factor)
        if gap(z0) <= 0.0:
            levels[name] = 0.0
            clamped.append(name)
            logger.warning(f"{name} level already holds at t = 0 (mu0 = {traj.mu0:.4g}, Z0 = {z0:.4g}); {name} = 0")
            continue
        levels[name] = _level_time(traj, gap, f"{name} level")
        if not t2 < levels[name] < t1:
            msg = f"{name} = {levels[name]:.6g} is outside (T2, T1) = ({t2:.6g}, {t1:.6g})"
            raise HypothesisViolationError(msg)
    times = CharacteristicTimes(T1=t1, T2=t2, T3=levels["T3"], T4=levels["T4"], clamped=tuple(clamped))
    logger.info(f"T1 = {times.T1:.6g}, T2 = {times.T2:.6g}, T3 = {times.T3:.6g}, T4 = {times.T4:.6g}")
    return times


def t2_velocity_bound(traj: ZTrajectory, eta: float = ETA) -> float:
    """Z'(T2) / (eta mu0), bounded above and below uniformly in mu0."""
    t2 = _level_time(traj, lambda z: z - traj.z0 - eta**2, "Z = Z0 + eta^2")
    return float(traj.solution(t2)[1]) / (eta * traj.mu0)


def classify_orbit(model: ZModel, y0: float, y1: float, atol: float = 1e-14) -> OrbitClass:
    """Place (Y0, Y1) against the separatrix level 2 kappa |Q|_3^3."""
    if abs(y0) <= atol and abs(y1) <= atol:
        return OrbitClass.FIXED_POINT
    level = model.separatrix_level
    two_h = 2.0 * float(hamiltonian(model, y0, y1))
    if abs(two_h - level) <= SEPARATRIX_RTOL * level:
        return OrbitClass.SEPARATRIX
    return OrbitClass.ABOVE_SEPARATRIX if two_h > level else OrbitClass.INTERIOR


def orbit_from_speed(model: ZModel, l1: float) -> tuple[float, float, OrbitClass]:
    """A state on the unique orbit (up to time shifts) with asymptotic speed l1 > 0."""
    if l1 <= 0.0:
        msg = f"asymptotic speed must be positive, got {l1}"
        raise ValueError(msg)
    level = model.separatrix_level
    if abs(l1**2 - level) <= SEPARATRIX_RTOL * level:
        return 0.0, 0.0, OrbitClass.SEPARATRIX
    if l1**2 > level:
        return 0.0, -math.sqrt(l1**2 - level), OrbitClass.ABOVE_SEPARATRIX
    return z0_from_mu0(model, 0.5 * l1, z_min=0.0), 0.0, OrbitClass.INTERIOR


def integrate_orbit(
    model: ZModel, y0: float, y1: float, t_span: tuple[float, float], *, nu: float = 0.0, rtol: float = 1e-11
) -> integrate.OdeSolution:
    """Dense solution of the (1+nu)-scaled ODE through (y0, y1) at t_span[0]."""

    def rhs(_t: float, state: NDArray[np.float64]) -> list[float]:
        return [float(state[1]), model.force(float(state[0]), nu)]

    sol = integrate.solve_ivp(
        rhs, t_span, [y0, y1], method="DOP853", rtol=rtol, atol=1e-14, dense_output=True
    )
    if not sol.success:
        msg = f"orbit integration failed: {sol.message}"
        raise RuntimeError(msg)
    return sol.sol


@dataclass(frozen=True, eq=False)
class PhasePortrait:
    """H on a (Y0, Y1) grid plus a handful of integrated orbits."""

    y0: NDArray[np.float64]
    y1: NDArray[np.float64]
    h: NDArray[np.float64]
    separatrix_level: float
    orbits: dict[str, NDArray[np.float64]]


def phase_portrait(
    model: ZModel,
    y0_max: float = 8.0,
    n: int = 121,
    speed_fractions: tuple[float, ...] = (0.25, 0.5, 0.75, 1.25),
    t_half: float = 20.0,
) -> PhasePortrait:
    """Level sets of H and sample orbits.

    Orbits are labelled by their asymptotic speed, given as fractions of the separatrix
    speed sqrt(2 kappa |Q|_3^3).
    """
    critical = math.sqrt(model.separatrix_level)
    y0 = np.linspace(-y0_max, y0_max, n)
    y1 = np.linspace(-1.5 * critical, 1.5 * critical, n)
    grid0, grid1 = np.meshgrid(y0, y1, indexing="ij")
    h = hamiltonian(model, grid0, grid1)
    orbits: dict[str, NDArray[np.float64]] = {}
    times = np.linspace(-t_half, t_half, 401)
    for fraction in speed_fractions:
        l1 = fraction * critical
        start0, start1, kind = orbit_from_speed(model, l1)
        if kind is OrbitClass.SEPARATRIX:
            continue
        back = integrate_orbit(model, start0, start1, (0.0, -t_half))
        ahead = integrate_orbit(model, start0, start1, (0.0, t_half))
        states = np.where(times < 0.0, back(np.minimum(times, 0.0)), ahead(np.maximum(times, 0.0)))
        orbits[f"l1={fraction:g}c ({kind})"] = np.vstack((times, states))
    return PhasePortrait(y0=y0, y1=y1, h=h, separatrix_level=model.separatrix_level, orbits=orbits)


class EnvelopeReport(NamedTuple):
    """Deviation of sampled z from the reference orbit at level h."""

    max_deviation: float
    constant: float
    direction: TimeDirection
    anchor_time: float


def comparison_envelope(
    model: ZModel,
    samples: NDArray[np.float64],
    nu: float,
    eps0: float,
    h: float,
    direction: TimeDirection = TimeDirection.FORWARD,
    rtol: float = 1e-9,
) -> EnvelopeReport:
    """Compare sampled (t, z, z') to the exact orbit with energy h.

    The reference orbit starts at the first sample (forward) or the last one (backward)
    with the sample's position and the velocity of the same sign that puts it on the
    level h.

    Raises:
        HypothesisViolationError: a sample lies outside H_-nu <= h <= H_+nu.
    """
    t, z, zdot = np.asarray(samples, dtype=np.float64)
    lower = hamiltonian(model, z, zdot, -nu)
    upper = hamiltonian(model, z, zdot, nu)
    slack = rtol * abs(h)
    failing = first_true(
        range(t.size), default=None, pred=lambda i: not lower[i] - slack <= h <= upper[i] + slack
    )
    if failing is not None:
        msg = (
            f"sample {failing} at t = {t[failing]}: H_-nu = {lower[failing]:.6e}, "
            f"h = {h:.6e}, H_+nu = {upper[failing]:.6e}"
        )
        raise HypothesisViolationError(msg)

    anchor = 0 if TimeDirection(direction) is TimeDirection.FORWARD else t.size - 1
    kinetic = max(2.0 * (h - model.kappa_h * float(model.overlap(z[anchor])[0])), 0.0)
    velocity = math.copysign(math.sqrt(kinetic), zdot[anchor])
    reference = integrate_orbit(model, float(z[anchor]), velocity, (float(t[anchor]), float(t[-1 - anchor])))
    deviation = float(np.abs(z - reference(t)[0]).max())
    scale = nu + eps0
    constant = deviation / scale if scale > 0.0 else math.nan
    return EnvelopeReport(
        max_deviation=deviation, constant=constant, direction=TimeDirection(direction), anchor_time=float(t[anchor])
    )


@functools.lru_cache(maxsize=8)
def scaling_band(model: ZModel, z_lo: float = 10.0, z_hi: float = 25.0, n: int = 31) -> tuple[float, float]:
    """min and max of mu0^2 sqrt(Z0) e^Z0 over [z_lo, z_hi]."""
    values = [mu0_from_z0(model, z) ** 2 * math.sqrt(z) * math.exp(z) for z in np.linspace(z_lo, z_hi, n)]
    return min(values), max(values)
