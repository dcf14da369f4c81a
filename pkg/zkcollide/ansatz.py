"""Approximate two-soliton solution V = R1 + R2 + V_A, its sources and its residual."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from zkcollide import ZKLabError
from zkcollide.ground_state import eval_profile
from zkcollide.interaction import (
    AnsatzCoefficients,
    AuxiliaryProfiles,
    CoefficientKernel,
    CoefficientSource,
    auxiliary_profiles,
)
from zkcollide.spectral import (
    Axis,
    Field2D,
    Grid2D,
    ProfileKind,
    bessel_potential,
    derivative,
    h1_norm,
    inner_product,
    laplacian,
    place_profile,
)

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from zkcollide.ground_state import GroundStateConstants, RadialProfile

logger = logging.getLogger(__name__)


class MissingRatesError(ZKLabError):
    """The operation needs the time derivatives of the modulation parameters."""

    def __init__(self, message: str = "Modulation rates are required") -> None:
        """Init."""
        super().__init__(message)


@dataclass(frozen=True)
class ModulationRates:
    """Time derivatives of the six modulation parameters."""

    z1: float = 0.0
    z2: float = 0.0
    w1: float = 0.0
    w2: float = 0.0
    mu1: float = 0.0
    mu2: float = 0.0


@dataclass(frozen=True)
class ModulationState:
    """Centers (z_i, w_i) and speed offsets mu_i of the two solitons; soliton 1 is on the right."""

    z1: float
    z2: float
    w1: float = 0.0
    w2: float = 0.0
    mu1: float = 0.0
    mu2: float = 0.0
    rates: ModulationRates | None = None

    def __post_init__(self) -> None:
        if self.z1 - self.z2 <= 0.0:
            msg = f"separation z1 - z2 must be positive, got {self.z1 - self.z2}"
            raise ValueError(msg)
        if 1.0 + self.mu1 <= 0.0 or 1.0 + self.mu2 <= 0.0:
            msg = "speeds 1 + mu_i must be positive"
            raise ValueError(msg)

    @property
    def z(self) -> float:
        return self.z1 - self.z2

    @property
    def zbar(self) -> float:
        return self.z1 + self.z2

    @property
    def mu(self) -> float:
        return self.mu1 - self.mu2

    @property
    def mubar(self) -> float:
        return self.mu1 + self.mu2

    @property
    def wbar(self) -> float:
        return self.w1 + self.w2

    def as_vector(self) -> NDArray[np.float64]:
        """(z1, w1, mu1, z2, w2, mu2)."""
        return np.array([self.z1, self.w1, self.mu1, self.z2, self.w2, self.mu2])

    @classmethod
    def from_vector(cls, values: NDArray[np.float64], rates: ModulationRates | None = None) -> ModulationState:
        z1, w1, mu1, z2, w2, mu2 = (float(v) for v in values)
        return cls(z1=z1, z2=z2, w1=w1, w2=w2, mu1=mu1, mu2=mu2, rates=rates)

    def with_rates(self, rates: ModulationRates) -> ModulationState:
        return ModulationState(self.z1, self.z2, self.w1, self.w2, self.mu1, self.mu2, rates)


class SolitonFrame(NamedTuple):
    """A placed soliton c Q(sqrt(c)(x - center)) and its three modulation directions."""

    R: Field2D  # noqa: N815
    dx: Field2D
    dy: Field2D
    lam: Field2D

    def directions(self) -> tuple[Field2D, Field2D, Field2D]:
        return self.dx, self.dy, self.lam


def soliton_frame(p: RadialProfile, grid: Grid2D, center: tuple[float, float], scale: float = 1.0) -> SolitonFrame:
    """Place the soliton and differentiate it analytically from the radial profile."""
    r_field = place_profile(p, grid, center, scale)
    lam = place_profile(p, grid, center, scale, kind=ProfileKind.LAMBDA)
    ox, oy = grid.minimum_image(center)
    root = math.sqrt(scale)
    radius = np.hypot(ox, oy)
    slope = scale * root * eval_profile(p, root * radius, 1)
    safe = np.where(radius > 0.0, radius, 1.0)
    dx = np.where(radius > 0.0, slope * ox / safe, 0.0)
    dy = np.where(radius > 0.0, slope * oy / safe, 0.0)
    return SolitonFrame(R=r_field, dx=Field2D(grid, dx), dy=Field2D(grid, dy), lam=lam)


def _row(grid: Grid2D, values: NDArray[np.float64]) -> Field2D:
    return Field2D(grid, np.broadcast_to(values[None, :], grid.shape).copy())


@dataclass(frozen=True, eq=False)
class AnsatzBundle:
    """All pieces of V = R1 + R2 + V_A at one modulation state."""

    state: ModulationState
    coefficients: AnsatzCoefficients
    V: Field2D  # noqa: N815
    R1: Field2D  # noqa: N815
    R2: Field2D  # noqa: N815
    VA: Field2D  # noqa: N815
    F: Field2D  # noqa: N815
    S: Field2D  # noqa: N815
    sigma1: Field2D
    sigma2: Field2D
    frames: tuple[SolitonFrame, SolitonFrame]
    axis_frames: tuple[SolitonFrame, SolitonFrame]
    aux: tuple[AuxiliaryProfiles, AuxiliaryProfiles]
    T: Field2D | None = None  # noqa: N815
    dt_VA: Field2D | None = None  # noqa: N815
    mvec1: tuple[float, float, float] | None = None
    mvec2: tuple[float, float, float] | None = None

    @property
    def grid(self) -> Grid2D:
        return self.V.grid


def _coefficient_source(
    p: RadialProfile, gc: GroundStateConstants, source: CoefficientSource | None
) -> CoefficientSource:
    return source if source is not None else CoefficientKernel(p, gc)


def build_ansatz(
    state: ModulationState,
    grid: Grid2D,
    p: RadialProfile,
    gc: GroundStateConstants,
    *,
    source: CoefficientSource | None = None,
) -> AnsatzBundle:
    """Assemble V, the corrector V_A = F + sum p_i . N R~_i and the source S.

    When ``state`` carries rates, the time derivative of V_A, the remainder T and the
    modulation vectors m_i are filled in as well.

    Raises:
        SeparationTooSmallError: the separation is below Z*.
        BoxTooSmallError: a soliton does not fit the box.
    """
    source = _coefficient_source(p, gc, source)
    coeffs = source.coefficients(state.z)
    frames = (
        soliton_frame(p, grid, (state.z1, state.w1), 1.0 + state.mu1),
        soliton_frame(p, grid, (state.z2, state.w2), 1.0 + state.mu2),
    )
    axis = (soliton_frame(p, grid, (state.z1, 0.0)), soliton_frame(p, grid, (state.z2, 0.0)))
    aux = (auxiliary_profiles(p, grid, (state.z1, 0.0)), auxiliary_profiles(p, grid, (state.z2, 0.0)))
    r1, r2 = frames[0].R, frames[1].R
    rt1, rt2 = axis[0].R, axis[1].R

    f_field = bessel_potential(2.0 * rt1 * rt2)
    va1 = f_field + coeffs.alpha1 * aux[0].X + coeffs.gamma1 * aux[0].W
    va2 = f_field + coeffs.alpha2 * aux[1].X + coeffs.gamma2 * aux[1].W
    if coeffs.beta1 or coeffs.beta2:
        va1 = va1 + coeffs.beta1 * aux[0].Y
        va2 = va2 + coeffs.beta2 * aux[1].Y
    va = va1 + (va2 - f_field)
    # V_A,2 also carries the far-field limit p_1 . n of the first soliton's profiles
    va2 = va2 + _row(grid, coeffs.beta1 * aux[0].h + coeffs.gamma1 * aux[0].l)
    s_field = 2.0 * (r1 * r2 - rt1 * rt2) + 2.0 * (r1 + r2) * va + va * va

    bundle = AnsatzBundle(
        state=state,
        coefficients=coeffs,
        V=r1 + r2 + va,
        R1=r1,
        R2=r2,
        VA=va,
        F=f_field,
        S=s_field,
        sigma1=2.0 * rt1 * va1,
        sigma2=2.0 * rt2 * va2,
        frames=frames,
        axis_frames=axis,
        aux=aux,
    )
    if state.rates is None:
        return bundle
    return _with_rates(bundle, source)


def corrector_gradient(bundle: AnsatzBundle, source: CoefficientSource) -> tuple[Field2D, Field2D]:
    """Partial derivatives of V_A with respect to z1 and z2; V_A does not depend on w_i or mu_i."""
    coeffs, aux = bundle.coefficients, bundle.aux
    (rt1, dxt1, _, lt1), (rt2, dxt2, _, lt2) = bundle.axis_frames
    d_alpha, d_gamma = source.derivatives(bundle.state.z)

    # alpha_2' = alpha_1', gamma_2' = -gamma_1'
    moving = d_alpha * (aux[0].X + aux[1].X) + d_gamma * (aux[0].W - aux[1].W)
    d_z1 = (
        bessel_potential(-2.0 * dxt1 * rt2)
        + moving
        + coeffs.alpha1 * bessel_potential(dxt1)
        + coeffs.gamma1 * bessel_potential(lt1)
    )
    d_z2 = (
        bessel_potential(-2.0 * rt1 * dxt2)
        - moving
        + coeffs.alpha2 * bessel_potential(dxt2)
        + coeffs.gamma2 * bessel_potential(lt2)
    )
    return d_z1, d_z2


def _with_rates(bundle: AnsatzBundle, source: CoefficientSource) -> AnsatzBundle:
    state, coeffs = bundle.state, bundle.coefficients
    rates = state.rates
    assert rates is not None
    d_z1, d_z2 = corrector_gradient(bundle, source)
    dt_va = rates.z1 * d_z1 + rates.z2 * d_z2

    t_field = dt_va
    for p_vec, tilde, frame in zip((coeffs.p1, coeffs.p2), bundle.axis_frames, bundle.frames, strict=True):
        for weight, a, b in zip(p_vec, tilde.directions(), frame.directions(), strict=True):
            if weight:
                t_field = t_field + weight * (a - b)

    mvec1 = (-rates.z1 + state.mu1 + coeffs.alpha1, -rates.w1 + coeffs.beta1, rates.mu1 + coeffs.gamma1)
    mvec2 = (-rates.z2 + state.mu2 + coeffs.alpha2, -rates.w2 + coeffs.beta2, rates.mu2 + coeffs.gamma2)
    return dataclasses.replace(bundle, T=t_field, dt_VA=dt_va, mvec1=mvec1, mvec2=mvec2)


def zk_flux_derivative(v: Field2D) -> Field2D:
    """dx(-Delta v + v - v^2), the spatial part of the symmetrized equation."""
    return derivative(-laplacian(v) + v - v * v, Axis.X)


class SigmaOrthogonality(NamedTuple):
    """<Sigma_i, (dx, dy, Lambda) R~_i> raw and normalized by |Sigma_i| |Q|_H1."""

    raw1: tuple[float, float, float]
    raw2: tuple[float, float, float]
    normalized1: tuple[float, float, float]
    normalized2: tuple[float, float, float]
    cross: tuple[float, ...]

    @property
    def worst(self) -> float:
        return max(map(abs, self.normalized1 + self.normalized2))


def sigma_orthogonality(
    z: float,
    grid: Grid2D,
    p: RadialProfile,
    gc: GroundStateConstants,
    *,
    source: CoefficientSource | None = None,
) -> SigmaOrthogonality:
    """Six orthogonality residuals of the localized sources at separation z.

    The solitons sit at +-z/2 on the x axis with no modulation. ``cross`` holds the
    products of the full Sigma = Sigma_1 + Sigma_2 with the directions of both solitons.
    """
    bundle = build_ansatz(ModulationState(z1=0.5 * z, z2=-0.5 * z), grid, p, gc, source=source)
    q_h1 = h1_norm(bundle.axis_frames[0].R)
    out = []
    for sigma, frame in zip((bundle.sigma1, bundle.sigma2), bundle.axis_frames, strict=True):
        raw = tuple(inner_product(sigma, d) for d in frame.directions())
        scale = math.sqrt(inner_product(sigma, sigma)) * q_h1
        out.append((raw, tuple(r / scale for r in raw)))
    total = bundle.sigma1 + bundle.sigma2
    cross = tuple(inner_product(total, d) for frame in bundle.axis_frames for d in frame.directions())
    report = SigmaOrthogonality(out[0][0], out[1][0], out[0][1], out[1][1], cross)
    logger.info(f"z = {z}: worst normalized Sigma residual {report.worst:.3e}")
    return report


class ResidualReport(NamedTuple):
    """L2 norms of E(V) and of the pieces of its decomposition."""

    ev: float
    modulation: float
    dx_s: float
    t: float
    defect: float


def residual_EV(  # noqa: N802
    state: ModulationState,
    grid: Grid2D,
    p: RadialProfile,
    gc: GroundStateConstants,
    *,
    source: CoefficientSource | None = None,
) -> tuple[Field2D, ResidualReport]:
    """E(V) = dt V - dx(-Delta V + V - V^2) with dt V from the rates by the chain rule.

    Raises:
        MissingRatesError: ``state.rates`` is None.
    """
    if state.rates is None:
        raise MissingRatesError
    bundle = build_ansatz(state, grid, p, gc, source=source)
    rates = state.rates
    assert bundle.dt_VA is not None
    assert bundle.T is not None
    assert bundle.mvec1 is not None
    assert bundle.mvec2 is not None

    dt_v = bundle.dt_VA
    for frame, (zdot, wdot, mudot) in zip(
        bundle.frames, ((rates.z1, rates.w1, rates.mu1), (rates.z2, rates.w2, rates.mu2)), strict=True
    ):
        dt_v = dt_v - zdot * frame.dx - wdot * frame.dy + mudot * frame.lam
    ev = dt_v - zk_flux_derivative(bundle.V)

    modulation = Field2D.zeros(grid)
    for m_vec, frame in zip((bundle.mvec1, bundle.mvec2), bundle.frames, strict=True):
        for weight, direction in zip(m_vec, frame.directions(), strict=True):
            modulation = modulation + weight * direction
    dx_s = derivative(bundle.S, Axis.X)
    defect = ev - modulation - bundle.T - dx_s

    def l2(f: Field2D) -> float:
        return math.sqrt(inner_product(f, f))

    report = ResidualReport(ev=l2(ev), modulation=l2(modulation), dx_s=l2(dx_s), t=l2(bundle.T), defect=l2(defect))
    logger.debug(f"residual decomposition at z = {state.z}: {report}")
    return ev, report


def soliton_residual(
    p: RadialProfile, grid: Grid2D, center: tuple[float, float], mu: float, rates: ModulationRates
) -> tuple[Field2D, Field2D]:
    """E(R) and m . MR for a single modulated soliton, which agree identically."""
    frame = soliton_frame(p, grid, center, 1.0 + mu)
    dt_r = -rates.z1 * frame.dx - rates.w1 * frame.dy + rates.mu1 * frame.lam
    ev = dt_r - zk_flux_derivative(frame.R)
    m_vec = (-rates.z1 + mu, -rates.w1, rates.mu1)
    modulation = m_vec[0] * frame.dx + m_vec[1] * frame.dy + m_vec[2] * frame.lam
    return ev, modulation
