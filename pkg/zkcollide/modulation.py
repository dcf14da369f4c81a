"""Fitting the six geometric parameters to a field and tracking them along a run."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from zkcollide import RHO, ZKLabError
from zkcollide.ansatz import (
    AnsatzBundle,
    ModulationState,
    build_ansatz,
    corrector_gradient,
)
from zkcollide.interaction import CoefficientKernel, CoefficientSource, SeparationTooSmallError
from zkcollide.spectral import (
    Axis,
    Field2D,
    Grid2D,
    antiderivative_x,
    derivative,
    gradient_energy,
    h1_norm,
    half_cosine_cutoff,
    inner_product,
    row_integral,
)
from zkcollide.spectrum import NonConvergenceError

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from numpy.typing import ArrayLike, NDArray

    from zkcollide.ground_state import GroundStateConstants, RadialProfile
    from zkcollide.z_dynamics import ZTrajectory

logger = logging.getLogger(__name__)

FIT_TOL = 1e-11
MAX_NEWTON = 20
MAX_HALVINGS = 8
TRUST_FRACTION = 0.3
JACOBIAN_STEP = 1e-5

RECORD_HEADER = (
    "t", "z1", "z2", "w1", "w2", "mu1", "mu2", "eps_h1",
    "z_minus_Z", "mu_minus_Zdot", "F_plus", "F_minus", "K1", "K2",
)  # fmt: skip


class TrustRegionError(ZKLabError):
    """The fitted remainder left the tube where the decomposition is unique."""

    def __init__(self, message: str = "Remainder outside the trust region") -> None:
        """Init."""
        super().__init__(message)


class LossOfLockError(ZKLabError):
    """A fit failed part way through a trajectory; ``records`` holds what was tracked."""

    def __init__(
        self, message: str = "Modulation fit lost lock", records: Sequence[ModulationRecord] = ()
    ) -> None:
        """Init."""
        super().__init__(message)
        self.records = list(records)


class Functional(enum.StrEnum):
    PLUS = "plus"
    MINUS = "minus"


def q_h1_norm(gc: GroundStateConstants) -> float:
    """|Q|_H1 from the tabulated integrals."""
    return math.sqrt(gc.int_q2 + 2.0 * gc.dxq2)


def _test_fields(bundle: AnsatzBundle) -> list[Field2D]:
    """(dx R1, dy R1, R1, dx R2, dy R2, R2), in parameter order."""
    return [f for frame in bundle.frames for f in (frame.dx, frame.dy, frame.R)]


def constraints(eps: Field2D, bundle: AnsatzBundle) -> NDArray[np.float64]:
    """The six products <eps, dx R_i>, <eps, dy R_i>, <eps, R_i>."""
    return np.array([inner_product(eps, f) for f in _test_fields(bundle)])


def jacobian(eps: Field2D, bundle: AnsatzBundle, source: CoefficientSource) -> NDArray[np.float64]:
    """Derivative of the constraint map with respect to (z1, w1, mu1, z2, w2, mu2).

    J[j, k] = -<d_k V, phi_j> + <eps, d_k phi_j>; the second term couples only the
    parameters of the soliton that phi_j belongs to.
    """
    d_z1, d_z2 = corrector_gradient(bundle, source)
    dv: list[Field2D] = []
    phi_derivatives: list[list[list[Field2D]]] = []
    for frame, d_va in zip(bundle.frames, (d_z1, d_z2), strict=True):
        dv += [d_va - frame.dx, -frame.dy, frame.lam]
        dx_lam = derivative(frame.lam, Axis.X)
        dy_lam = derivative(frame.lam, Axis.Y)
        # rows: phi = dx R, dy R, R; columns: z, w, mu
        phi_derivatives.append(
            [
                [-derivative(frame.dx, Axis.X), -derivative(frame.dx, Axis.Y), dx_lam],
                [-derivative(frame.dy, Axis.X), -derivative(frame.dy, Axis.Y), dy_lam],
                [-frame.dx, -frame.dy, frame.lam],
            ]
        )
    tests = _test_fields(bundle)
    jac = np.array([[-inner_product(d, phi) for d in dv] for phi in tests])
    for i, block in enumerate(phi_derivatives):
        for row, derivs in enumerate(block):
            for col, d_phi in enumerate(derivs):
                jac[3 * i + row, 3 * i + col] += inner_product(eps, d_phi)
    return jac


class FitResult(NamedTuple):
    state: ModulationState
    eps: Field2D
    residuals: NDArray[np.float64]
    iterations: int
    bundle: AnsatzBundle


def _trust(eps: Field2D, sigma: float) -> float:
    norm = h1_norm(eps)
    if norm > sigma:
        msg = f"|eps|_H1 = {norm:.4g} above trust radius {sigma:.4g}"
        raise TrustRegionError(msg)
    return norm


def fit_parameters(  # noqa: PLR0913
    w: Field2D,
    init: ModulationState,
    p: RadialProfile,
    gc: GroundStateConstants,
    tol: float = FIT_TOL,
    *,
    source: CoefficientSource | None = None,
    sigma: float | None = None,
    max_iter: int = MAX_NEWTON,
) -> FitResult:
    """Damped Newton iteration on the orthogonality conditions, eps = w - V(state).

    Converged when the largest constraint is at most tol |Q|_L2^2.

    Raises:
        TrustRegionError: |eps|_H1 exceeds sigma, at the start or along the iteration.
        NonConvergenceError: no convergence after max_iter steps or a step cannot be damped.
        SeparationTooSmallError: the separation falls below Z*.
    """
    source = source if source is not None else CoefficientKernel(p, gc)
    sigma = sigma if sigma is not None else TRUST_FRACTION * q_h1_norm(gc)
    grid = w.grid
    target = tol * gc.int_q2

    state = init
    bundle = build_ansatz(state, grid, p, gc, source=source)
    eps = w - bundle.V
    _trust(eps, sigma)
    residuals = constraints(eps, bundle)
    for iteration in range(max_iter + 1):
        worst = float(np.abs(residuals).max())
        logger.debug(f"newton {iteration}: max constraint {worst:.3e}, z = {state.z:.10f}")
        if worst <= target:
            return FitResult(state, eps, residuals, iteration, bundle)
        if iteration == max_iter:
            break
        delta = np.linalg.solve(jacobian(eps, bundle, source), -residuals)
        base = state.as_vector()
        scale = 1.0
        for _ in range(MAX_HALVINGS + 1):
            try:
                trial = ModulationState.from_vector(base + scale * delta)
                trial_bundle = build_ansatz(trial, grid, p, gc, source=source)
            except (ValueError, SeparationTooSmallError):
                scale *= 0.5
                continue
            trial_eps = w - trial_bundle.V
            trial_residuals = constraints(trial_eps, trial_bundle)
            if np.linalg.norm(trial_residuals) < np.linalg.norm(residuals):
                break
            scale *= 0.5
        else:
            msg = f"Newton step could not be damped at iteration {iteration} (max constraint {worst:.3e})"
            raise NonConvergenceError(msg)
        state, bundle, eps, residuals = trial, trial_bundle, trial_eps, trial_residuals
        _trust(eps, sigma)
    msg = f"no convergence after {max_iter} Newton steps (max constraint {float(np.abs(residuals).max()):.3e})"
    raise NonConvergenceError(msg)


def finite_difference_jacobian(
    w: Field2D,
    state: ModulationState,
    p: RadialProfile,
    gc: GroundStateConstants,
    *,
    source: CoefficientSource,
    step: float = JACOBIAN_STEP,
) -> NDArray[np.float64]:
    """Central differences of the constraint map, column by column."""
    base = state.as_vector()
    columns = []
    for k in range(base.size):
        shift = np.zeros_like(base)
        shift[k] = step
        values = []
        for sign in (1.0, -1.0):
            bundle = build_ansatz(ModulationState.from_vector(base + sign * shift), w.grid, p, gc, source=source)
            values.append(constraints(w - bundle.V, bundle))
        columns.append((values[0] - values[1]) / (2.0 * step))
    return np.column_stack(columns)


def jacobian_check(
    w: Field2D,
    state: ModulationState,
    p: RadialProfile,
    gc: GroundStateConstants,
    *,
    source: CoefficientSource,
    step: float = JACOBIAN_STEP,
) -> float:
    """max |J - J_fd| / max |J| at ``state``."""
    bundle = build_ansatz(state, w.grid, p, gc, source=source)
    analytic = jacobian(w - bundle.V, bundle, source)
    numeric = finite_difference_jacobian(w, state, p, gc, source=source, step=step)
    error = float(np.abs(analytic - numeric).max() / np.abs(analytic).max())
    logger.info(f"Jacobian check: relative difference {error:.2e}")
    return error


def weight_psi(x: ArrayLike, rho: float = RHO) -> NDArray[np.float64]:
    """(2/pi) arctan(exp(8 rho x))."""
    return (2.0 / math.pi) * np.arctan(np.exp(8.0 * rho * np.asarray(x, dtype=np.float64)))


def weight_psi_derivatives(x: ArrayLike, rho: float = RHO) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """psi' = 8 rho / (pi cosh(8 rho x)) and psi''."""
    s = 8.0 * rho * np.asarray(x, dtype=np.float64)
    first = 8.0 * rho / (math.pi * np.cosh(s))
    second = -8.0 * rho * first * np.tanh(s)
    return first, second


class Weights(NamedTuple):
    plus: NDArray[np.float64]
    minus_e: NDArray[np.float64]
    minus_m: NDArray[np.float64]


def weights(state: ModulationState, grid: Grid2D, rho: float = RHO) -> Weights:
    """psi_+, psi_-e and psi_-m on the x axis of ``grid``, psi centred between the solitons."""
    psi = weight_psi(grid.x - 0.5 * state.zbar, rho)[:, None]
    mu1, mu2 = state.mu1, state.mu2
    return Weights(
        plus=mu1 * psi + mu2 * (1.0 - psi),
        minus_e=psi / (1.0 + mu1) ** 2 + (1.0 - psi) / (1.0 + mu2) ** 2,
        minus_m=mu1 * psi / (1.0 + mu1) ** 2 + mu2 * (1.0 - psi) / (1.0 + mu2) ** 2,
    )


def _integral(values: NDArray[np.float64], grid: Grid2D) -> float:
    return float(values.sum()) * grid.cell


def energy_functionals(
    eps: Field2D, bundle: AnsatzBundle, which: Functional | str, rho: float = RHO
) -> float:
    """Localized mass-energy functional F_+ or F_- of the remainder.

    The energy density is |grad eps|^2/2 + eps^2/2 - ((V+eps)^3 - V^3 - 3V^2 eps)/3, taken
    unweighted for F_+ and weighted by psi_-e for F_-, plus the mass term with psi_+ or
    psi_-m, minus <S, eps>.
    """
    grid = eps.grid
    v = bundle.V.values
    e = eps.values
    dex = derivative(eps, Axis.X).values
    dey = derivative(eps, Axis.Y).values
    cubic = ((v + e) ** 3 - v**3 - 3.0 * v**2 * e) / 3.0
    density = 0.5 * (dex**2 + dey**2) + 0.5 * e**2 - cubic
    psi = weights(bundle.state, grid, rho)
    source_term = inner_product(bundle.S, eps)
    if Functional(which) is Functional.PLUS:
        return _integral(density, grid) + _integral(0.5 * e**2 * psi.plus, grid) - source_term
    return _integral(density * psi.minus_e, grid) + _integral(0.5 * e**2 * psi.minus_m, grid) - source_term


def coercivity_ratio(eps: Field2D, bundle: AnsatzBundle, rho: float = RHO) -> float:
    """|eps|_H1^2 / (F_- + |S|_H1^2), the constant of the localized coercivity."""
    s_h1 = h1_norm(bundle.S)
    return (inner_product(eps, eps) + gradient_energy(eps)) / (
        energy_functionals(eps, bundle, Functional.MINUS, rho) + s_h1**2
    )


def transverse_cutoff(x: ArrayLike, mu0: float) -> NDArray[np.float64]:
    """chi(mu0 x): 1 for mu0 x <= 1, 0 for mu0 x >= 2."""
    return 1.0 - half_cosine_cutoff(mu0 * np.asarray(x, dtype=np.float64), 1.0)


def transverse_weights(bundle: AnsatzBundle, mu0: float) -> tuple[Field2D, Field2D]:
    """K_i = chi(mu0 x) int_{-Lx}^x dy R_i."""
    grid = bundle.grid
    chi = transverse_cutoff(grid.x, mu0)[:, None]
    out = []
    for frame in bundle.frames:
        running = row_integral(frame.dy)[None, :] - antiderivative_x(frame.dy).values
        out.append(Field2D(grid, chi * running))
    return out[0], out[1]


def transverse_functionals(eps: Field2D, bundle: AnsatzBundle, mu0: float) -> tuple[float, float]:
    """(int eps K_1, int eps K_2)."""
    k1, k2 = transverse_weights(bundle, mu0)
    return inner_product(eps, k1), inner_product(eps, k2)


@dataclass(frozen=True)
class ModulationRecord:
    """Fit at one time, compared with the reference separation Z(t)."""

    t: float
    gamma: ModulationState
    eps_h1: float
    eps_l2: float
    ortho_residuals: tuple[float, ...]
    f_plus: float
    f_minus: float
    k1: float
    k2: float
    z_ref: float = math.nan
    zdot_ref: float = math.nan

    @property
    def z_error(self) -> float:
        return self.gamma.z - self.z_ref

    @property
    def mu_error(self) -> float:
        return self.gamma.mu - self.zdot_ref

    def as_row(self) -> tuple[float, ...]:
        g = self.gamma
        return (
            self.t, g.z1, g.z2, g.w1, g.w2, g.mu1, g.mu2, self.eps_h1,
            self.z_error, self.mu_error, self.f_plus, self.f_minus, self.k1, self.k2,
        )  # fmt: skip


def _predict(records: Sequence[ModulationRecord], t: float) -> ModulationState:
    """Linear extrapolation from the last two fits, or z_i' = mu_i from a single one."""
    last = records[-1]
    if len(records) >= 2:  # noqa: PLR2004
        prev = records[-2]
        ratio = (t - last.t) / (last.t - prev.t)
        guess = last.gamma.as_vector() + ratio * (last.gamma.as_vector() - prev.gamma.as_vector())
        try:
            return ModulationState.from_vector(guess)
        except ValueError:
            pass
    g = last.gamma
    h = t - last.t
    return ModulationState(g.z1 + h * g.mu1, g.z2 + h * g.mu2, g.w1, g.w2, g.mu1, g.mu2)


@dataclass
class ModulationTracker:
    """Evolution callback that fits every field it is handed, warm started from the last fit."""

    initial: ModulationState
    p: RadialProfile
    gc: GroundStateConstants
    source: CoefficientSource
    mu0: float
    z_ref: ZTrajectory | None = None
    rho: float = RHO
    tol: float = FIT_TOL
    sigma: float | None = None
    records: list[ModulationRecord] = field(default_factory=list)

    def __call__(self, t: float, v: Field2D) -> None:
        guess = _predict(self.records, t) if self.records else self.initial
        try:
            fit = fit_parameters(v, guess, self.p, self.gc, self.tol, source=self.source, sigma=self.sigma)
        except (TrustRegionError, NonConvergenceError, SeparationTooSmallError) as e:
            msg = f"fit failed at t = {t:.6g} after {len(self.records)} records: {e}"
            raise LossOfLockError(msg, self.records) from e
        self.records.append(self.describe(t, fit))

    def describe(self, t: float, fit: FitResult) -> ModulationRecord:
        eps, bundle = fit.eps, fit.bundle
        k1, k2 = transverse_functionals(eps, bundle, self.mu0)
        z_ref = zdot_ref = math.nan
        if self.z_ref is not None and abs(t) <= self.z_ref.t_end:
            z_values, zdot_values = self.z_ref.state_at(t)
            z_ref, zdot_ref = float(z_values[0]), float(zdot_values[0])
        record = ModulationRecord(
            t=t,
            gamma=fit.state,
            eps_h1=h1_norm(eps),
            eps_l2=math.sqrt(inner_product(eps, eps)),
            ortho_residuals=tuple(float(r) for r in fit.residuals),
            f_plus=energy_functionals(eps, bundle, Functional.PLUS, self.rho),
            f_minus=energy_functionals(eps, bundle, Functional.MINUS, self.rho),
            k1=k1,
            k2=k2,
            z_ref=z_ref,
            zdot_ref=zdot_ref,
        )
        logger.info(
            f"t={t:.3f}: z={fit.state.z:.6f} mu={fit.state.mu:.6f} |eps|_H1={record.eps_h1:.3e} "
            f"({fit.iterations} Newton steps)"
        )
        return record


def track(  # noqa: PLR0913
    snapshots: Iterable[tuple[float, Field2D]],
    initial: ModulationState,
    p: RadialProfile,
    gc: GroundStateConstants,
    z_ref: ZTrajectory | None = None,
    *,
    source: CoefficientSource | None = None,
    mu0: float | None = None,
    rho: float = RHO,
) -> list[ModulationRecord]:
    """Fit a sequence of (t, field) snapshots in order.

    Raises:
        LossOfLockError: a fit failed; the error carries the records gathered so far.
    """
    tracker = ModulationTracker(
        initial=initial,
        p=p,
        gc=gc,
        source=source if source is not None else CoefficientKernel(p, gc),
        mu0=mu0 if mu0 is not None else max(abs(initial.mu), 1e-3),
        z_ref=z_ref,
        rho=rho,
    )
    for t, v in snapshots:
        tracker(t, v)
    return tracker.records


class RateRecord(NamedTuple):
    """Centered-difference rates and the modulation vectors m_1, m_2 at an interior record."""

    t: float
    rates: NDArray[np.float64]
    m1: tuple[float, float, float]
    m2: tuple[float, float, float]


def rate_diagnostics(records: Sequence[ModulationRecord], source: CoefficientSource) -> list[RateRecord]:
    """m_i = (-z_i' + mu_i + alpha_i, -w_i' + beta_i, mu_i' + gamma_i) from adjacent records."""
    out = []
    for before, here, after in zip(records, records[1:], records[2:], strict=False):
        rates = (after.gamma.as_vector() - before.gamma.as_vector()) / (after.t - before.t)
        g = here.gamma
        c = source.coefficients(g.z)
        m1 = (-rates[0] + g.mu1 + c.alpha1, -rates[1] + c.beta1, rates[2] + c.gamma1)
        m2 = (-rates[3] + g.mu2 + c.alpha2, -rates[4] + c.beta2, rates[5] + c.gamma2)
        out.append(RateRecord(here.t, rates, m1, m2))
    return out


class DriftReport(NamedTuple):
    """Least-squares slope of K_1 against w_1 and its mismatch with c_Q."""

    slope: float
    relative_error: float


def transverse_drift(records: Sequence[ModulationRecord], c_q: float) -> DriftReport:
    """Fit K_1(t) - K_1(t0) = c (w_1(t) - w_1(t0)) and compare c with c_Q."""
    if len(records) < 3:  # noqa: PLR2004
        msg = "need at least three records"
        raise ValueError(msg)
    dk = np.array([r.k1 - records[0].k1 for r in records])
    dw = np.array([r.gamma.w1 - records[0].gamma.w1 for r in records])
    denominator = float(dw @ dw)
    if denominator == 0.0:
        msg = "w_1 does not move along the records"
        raise ValueError(msg)
    slope = float(dk @ dw) / denominator
    report = DriftReport(slope=slope, relative_error=abs(slope - c_q) / c_q)
    logger.info(f"transverse drift coefficient {slope:.6f} against c_Q = {c_q:.6f}")
    return report
