"""Two-soliton interaction integrals, auxiliary profiles and ansatz coefficients."""

from __future__ import annotations

import functools
import logging
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING, NamedTuple, Protocol

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from zkcollide import Z_STAR, ZKLabError
from zkcollide.ground_state import GroundStateConstants, QuadratureError, RadialProfile, eval_profile
from zkcollide.parallel import WorkerKind, fan_out
from zkcollide.spectral import (
    Axis,
    Field2D,
    Grid2D,
    ProfileKind,
    antiderivative_x,
    bessel_potential,
    derivative,
    inner_product,
    place_profile,
    place_shifted,
    row_integral,
)

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

logger = logging.getLogger(__name__)

ANGULAR_NODES = 512
RADIAL_REACH = 25.0
QUAD_EPSREL = 1e-10
TABLE_STEP = 0.25
REFERENCE_GRID = Grid2D(Lx=28.0, Ly=28.0, Nx=256, Ny=256)


class SeparationTooSmallError(ZKLabError):
    """Separation below the validated minimum Z*."""

    def __init__(self, message: str = "Separation below the validated minimum") -> None:
        """Init."""
        super().__init__(message)


class TableRangeError(ZKLabError):
    """Separation outside the tabulated range."""

    def __init__(self, message: str = "Separation outside the interaction table") -> None:
        """Init."""
        super().__init__(message)


class InteractionPair(NamedTuple):
    """G(z) = int Q(x + z, y) dx(Q^2) and F(z) = int Q(x + z, y) Q^2."""

    G: float  # noqa: N815
    F: float  # noqa: N815


def interaction_pair(z: float, p: RadialProfile) -> InteractionPair:
    """Both integrals at once: quad_vec in r, periodic trapezoid in theta.

    In polar coordinates about the unshifted soliton,
    G = int r dr int Q(|r e_theta + (z, 0)|) 2 Q(r) Q'(r) cos(theta) dtheta.
    """
    if z < 0.0:
        msg = f"separation must be non-negative, got {z}"
        raise ValueError(msg)
    theta = 2.0 * math.pi * np.arange(ANGULAR_NODES) / ANGULAR_NODES
    cos_t = np.cos(theta)
    dtheta = 2.0 * math.pi / ANGULAR_NODES

    def integrand(r: float) -> NDArray[np.float64]:
        shifted = eval_profile(p, np.sqrt(np.maximum(r * r + z * z + 2.0 * r * z * cos_t, 0.0)))
        q = float(eval_profile(p, r))
        dq = float(eval_profile(p, r, 1))
        g = 2.0 * q * dq * float(shifted @ cos_t) * dtheta
        f = q * q * float(shifted.sum()) * dtheta
        return np.array([g * r, f * r])

    upper = z + RADIAL_REACH
    points = sorted({*np.arange(1.0, upper, 2.0).tolist(), z} - {0.0, upper})
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, _ = integrate.quad_vec(
                integrand, 0.0, upper, epsabs=0.0, epsrel=QUAD_EPSREL, points=points, limit=2000
            )
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(str(exc)) from exc
    return InteractionPair(float(value[0]), float(value[1]))


def attraction_integral(z: float, p: RadialProfile) -> float:
    """G(z)."""
    return interaction_pair(z, p).G


def overlap_integral(z: float, p: RadialProfile) -> float:
    """F(z)."""
    return interaction_pair(z, p).F


@dataclass(frozen=True, eq=False)
class InteractionTable:
    """G and F tabulated on increasing separations, with a Hamiltonian-consistent interpolant.

    ln(F sqrt(z) e^z) is interpolated by a cubic Hermite spline whose slopes come from G,
    so the interpolated force is exactly minus the derivative of the interpolated F.
    Beyond the last node the normalized overlap relaxes to ``c_int`` like 1/z.
    """

    z_values: NDArray[np.float64]
    G: NDArray[np.float64]  # noqa: N815
    F: NDArray[np.float64]  # noqa: N815
    c_int: float | None = None

    def __post_init__(self) -> None:
        if np.any(np.diff(self.z_values) <= 0.0):
            msg = "z_values must be strictly increasing"
            raise ValueError(msg)
        if np.any(self.G <= 0.0) or np.any(self.F <= 0.0):
            msg = "G and F must be positive on the table"
            raise ValueError(msg)

    @property
    def normalized_g(self) -> NDArray[np.float64]:
        return self.G * np.sqrt(self.z_values) * np.exp(self.z_values)

    @property
    def normalized_f(self) -> NDArray[np.float64]:
        return self.F * np.sqrt(self.z_values) * np.exp(self.z_values)

    @property
    def z_min(self) -> float:
        return float(self.z_values[0])

    @property
    def z_max(self) -> float:
        return float(self.z_values[-1])

    @cached_property
    def _log_overlap(self) -> CubicHermiteSpline:
        z = self.z_values
        slope = -self.G / self.F + 0.5 / z + 1.0
        return CubicHermiteSpline(z, np.log(self.normalized_f), slope)

    def _phi(self, z: NDArray[np.float64], deriv: int) -> NDArray[np.float64]:
        out = np.empty_like(z)
        inside = z <= self.z_max
        out[inside] = self._log_overlap(z[inside], deriv)
        beyond = ~inside
        if beyond.any():
            if self.c_int is None:
                msg = f"z = {float(z.max())} above the table end {self.z_max}"
                raise TableRangeError(msg)
            end = float(self._log_overlap(self.z_max))
            phi_inf = math.log(self.c_int)
            scale = (end - phi_inf) * self.z_max
            out[beyond] = phi_inf + scale / z[beyond] if deriv == 0 else -scale / z[beyond] ** 2
        return out

    def _check(self, z: ArrayLike) -> NDArray[np.float64]:
        values = np.atleast_1d(np.asarray(z, dtype=np.float64))
        if np.any(values < self.z_min):
            msg = f"z = {float(values.min())} below the table start {self.z_min}"
            raise TableRangeError(msg)
        return values

    def overlap(self, z: ArrayLike) -> NDArray[np.float64]:
        """Interpolated F(z)."""
        values = self._check(z)
        return np.exp(self._phi(values, 0) - values) / np.sqrt(values)

    def attraction(self, z: ArrayLike) -> NDArray[np.float64]:
        """Interpolated G(z) = -F'(z)."""
        values = self._check(z)
        slope = self._phi(values, 1) - 0.5 / values - 1.0
        return -self.overlap(values) * slope


def build_interaction_table(
    p: RadialProfile,
    z_min: float = 2.0,
    z_max: float = 50.0,
    step: float = TABLE_STEP,
    *,
    c_int: float | None = None,
    workers: WorkerKind = WorkerKind.INLINE,
    max_workers: int = 4,
) -> InteractionTable:
    """Tabulate G and F, fanning the separations out over workers when asked."""
    z_values = np.arange(z_min, z_max + 0.5 * step, step)
    tasks = {f"z={z:09.4f}": functools.partial(interaction_pair, float(z), p) for z in z_values}
    outcomes = fan_out(tasks, kind=workers, max_workers=max_workers)
    failures = [outcome for outcome in outcomes.values() if not outcome.ok]
    if failures:
        first = failures[0]
        msg = f"{first.name}: {first.error}"
        raise QuadratureError(msg)
    pairs = [outcomes[name].value for name in tasks]
    table = InteractionTable(
        z_values=z_values,
        G=np.array([pair.G for pair in pairs]),
        F=np.array([pair.F for pair in pairs]),
        c_int=c_int,
    )
    logger.info(f"interaction table on [{z_min}, {z_max}] with {z_values.size} nodes")
    return table


@dataclass(frozen=True, eq=False)
class AuxiliaryProfiles:
    """X, Y, W for a soliton at the origin, and the limits h(y), l(y) as x -> -inf."""

    X: Field2D  # noqa: N815
    Y: Field2D  # noqa: N815
    W: Field2D  # noqa: N815
    h: NDArray[np.float64]
    l: NDArray[np.float64]  # noqa: E741


def auxiliary_profiles(
    p: RadialProfile, grid: Grid2D, center: tuple[float, float] = (0.0, 0.0)
) -> AuxiliaryProfiles:
    """X = -(1-D)^-1 Q, Y = -dx^-1 (1-D)^-1 dyQ, W = -dx^-1 (1-D)^-1 LambdaQ."""
    q = place_profile(p, grid, center)
    lam = place_profile(p, grid, center, kind=ProfileKind.LAMBDA)
    smooth_dy = bessel_potential(derivative(q, Axis.Y))
    smooth_lam = bessel_potential(lam)
    return AuxiliaryProfiles(
        X=-bessel_potential(q),
        Y=antiderivative_x(smooth_dy),
        W=antiderivative_x(smooth_lam),
        h=row_integral(smooth_dy),
        l=row_integral(smooth_lam),
    )


def plateau(p: RadialProfile, grid: Grid2D, z1: float, z2: float) -> Field2D:
    """P = W_1 - W_2 for solitons on the x axis at z1 > z2."""
    return auxiliary_profiles(p, grid, (z1, 0.0)).W - auxiliary_profiles(p, grid, (z2, 0.0)).W


@dataclass(frozen=True)
class AnsatzCoefficients:
    """alpha_i, beta_i, gamma_i at separation z."""

    z: float
    alpha1: float
    alpha2: float
    beta1: float
    beta2: float
    gamma1: float
    gamma2: float

    @classmethod
    def symmetric(cls, z: float, alpha: float, gamma: float) -> AnsatzCoefficients:
        """alpha_2 = alpha_1, beta = 0, gamma_2 = -gamma_1."""
        return cls(z=z, alpha1=alpha, alpha2=alpha, beta1=0.0, beta2=0.0, gamma1=gamma, gamma2=-gamma)

    @property
    def p1(self) -> tuple[float, float, float]:
        return (self.alpha1, self.beta1, self.gamma1)

    @property
    def p2(self) -> tuple[float, float, float]:
        return (self.alpha2, self.beta2, self.gamma2)


class CoefficientKernel:
    """Fields of a unit soliton at the origin on a dedicated box, reused for every z.

    alpha_1 = c (<2 Q Q(. + z), LambdaQ + (1-D)^-1 Q> - <2QW, LambdaQ> G(z) / <LambdaQ, Q>)
    with c = (<Q, LambdaQ> + <(1-D)^-1 Q, Q>)^-1.
    """

    def __init__(
        self,
        p: RadialProfile,
        gc: GroundStateConstants,
        grid: Grid2D = REFERENCE_GRID,
        z_star: float = Z_STAR,
    ) -> None:
        """Init."""
        self.profile = p
        self.constants = gc
        self.grid = grid
        self.z_star = z_star
        self.q = place_profile(p, grid)
        self.lam = place_profile(p, grid, kind=ProfileKind.LAMBDA)
        aux = auxiliary_profiles(p, grid)
        self.aux = aux
        self.test_field = self.lam - aux.X
        self.two_q_w_lambda = inner_product(2.0 * self.q * aux.W, self.lam)
        self.c = 1.0 / (gc.lam_q_q + gc.bessel_q_q)
        logger.info(f"<2QW, LambdaQ> = {self.two_q_w_lambda:.10e}")

    @functools.lru_cache(maxsize=4096)  # noqa: B019
    def attraction(self, z: float) -> float:
        return attraction_integral(z, self.profile)

    @functools.lru_cache(maxsize=4096)  # noqa: B019
    def coefficients(self, z: float) -> AnsatzCoefficients:
        """alpha, beta, gamma at separation z.

        Raises:
            SeparationTooSmallError: z < Z*.
        """
        if z < self.z_star:
            msg = f"z = {z} below Z* = {self.z_star}"
            raise SeparationTooSmallError(msg)
        g = self.attraction(z)
        lam_q_q = self.constants.lam_q_q
        shifted = place_shifted(self.profile, self.grid, (-z, 0.0))
        source = inner_product(2.0 * self.q * shifted, self.test_field)
        alpha = self.c * (source - self.two_q_w_lambda * g / lam_q_q)
        return AnsatzCoefficients.symmetric(z, alpha=alpha, gamma=-g / lam_q_q)

    def derivatives(self, z: float, step: float = 1e-3) -> tuple[float, float]:
        """Centered differences (d alpha_1/dz, d gamma_1/dz)."""
        hi = self.coefficients(z + step)
        lo = self.coefficients(z - step)
        return (
            (hi.alpha1 - lo.alpha1) / (2.0 * step),
            (hi.gamma1 - lo.gamma1) / (2.0 * step),
        )


def ansatz_coefficients(
    z: float, gc: GroundStateConstants, p: RadialProfile, *, kernel: CoefficientKernel | None = None
) -> AnsatzCoefficients:
    """Coefficients making the localized sources orthogonal to the soliton directions."""
    if z < Z_STAR:
        msg = f"z = {z} below Z* = {Z_STAR}"
        raise SeparationTooSmallError(msg)
    if kernel is None:
        kernel = CoefficientKernel(p, gc)
    return kernel.coefficients(z)


def overlap_decay_sup(p: RadialProfile, grid: Grid2D, z: float) -> float:
    """max over |j|,|k| <= 1 of sup |d^j Q(x + z) d^k Q(x)| sqrt(z) e^z."""
    q = place_profile(p, grid)
    shifted = place_shifted(p, grid, (-z, 0.0))
    near = [q, derivative(q, Axis.X), derivative(q, Axis.Y)]
    far = [shifted, derivative(shifted, Axis.X), derivative(shifted, Axis.Y)]
    worst = max(float(np.abs(a.values * b.values).max()) for a in near for b in far)
    return worst * math.sqrt(z) * math.exp(z)


class CoefficientSource(Protocol):
    """Anything that yields the ansatz coefficients and their z-derivatives."""

    def coefficients(self, z: float) -> AnsatzCoefficients: ...

    def derivatives(self, z: float) -> tuple[float, float]: ...


@dataclass(frozen=True, eq=False)
class CoefficientTable:
    """alpha_1 and gamma_1 tabulated from a kernel, splined as alpha sqrt(z) e^z and gamma sqrt(z) e^z.

    Past the last node the normalized values are held at their end values.
    """

    z_values: NDArray[np.float64]
    alpha: NDArray[np.float64]
    gamma: NDArray[np.float64]
    z_star: float = Z_STAR

    @cached_property
    def _splines(self) -> tuple[CubicSpline, CubicSpline]:
        weight = np.sqrt(self.z_values) * np.exp(self.z_values)
        return CubicSpline(self.z_values, self.alpha * weight), CubicSpline(self.z_values, self.gamma * weight)

    def _normalized(self, z: float, deriv: int) -> tuple[float, float]:
        if z < self.z_star:
            msg = f"z = {z} below Z* = {self.z_star}"
            raise SeparationTooSmallError(msg)
        if z < self.z_values[0]:
            msg = f"z = {z} below the table start {self.z_values[0]}"
            raise TableRangeError(msg)
        edge = float(self.z_values[-1])
        if z > edge:
            if deriv:
                return 0.0, 0.0
            z = edge
        alpha_s, gamma_s = self._splines
        return float(alpha_s(z, deriv)), float(gamma_s(z, deriv))

    def coefficients(self, z: float) -> AnsatzCoefficients:
        scale = math.exp(-z) / math.sqrt(z)
        alpha, gamma = self._normalized(z, 0)
        return AnsatzCoefficients.symmetric(z, alpha=alpha * scale, gamma=gamma * scale)

    def derivatives(self, z: float) -> tuple[float, float]:
        scale = math.exp(-z) / math.sqrt(z)
        chain = 1.0 + 0.5 / z
        alpha, gamma = self._normalized(z, 0)
        d_alpha, d_gamma = self._normalized(z, 1)
        return scale * (d_alpha - chain * alpha), scale * (d_gamma - chain * gamma)


def build_coefficient_table(
    kernel: CoefficientKernel, z_min: float = Z_STAR, z_max: float = 40.0, step: float = 0.25
) -> CoefficientTable:
    """Evaluate the kernel on a uniform z grid."""
    z_values = np.arange(z_min, z_max + 0.5 * step, step)
    rows = [kernel.coefficients(float(z)) for z in z_values]
    logger.info(f"coefficient table on [{z_min}, {z_max}] with {z_values.size} nodes")
    return CoefficientTable(
        z_values=z_values,
        alpha=np.array([row.alpha1 for row in rows]),
        gamma=np.array([row.gamma1 for row in rows]),
        z_star=kernel.z_star,
    )
