"""The linearized operator L = -Delta + 1 - 2Q on a periodic grid."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple

import numpy as np
from scipy import special
from scipy.sparse.linalg import LinearOperator, lobpcg, minres

from zkcollide import ZKLabError
from zkcollide.spectral import (
    Axis,
    Field2D,
    Grid2D,
    GridMismatchError,
    bessel_potential,
    derivative,
    helmholtz,
    inner_product,
    sample_spectral,
)

if TYPE_CHECKING:
    from collections.abc import Callable

    from numpy.typing import NDArray

logger = logging.getLogger(__name__)

EIGEN_TOL = 1e-8
KERNEL_TOL = 1e-6
PLATEAU_WINDOW = (6.0, 10.0)


class NonConvergenceError(ZKLabError):
    """Iterative solver stopped before reaching the tolerance."""

    def __init__(self, message: str = "Iterative solver did not converge") -> None:
        """Init."""
        super().__init__(message)


class IllPosedError(ZKLabError):
    """Right-hand side has components along the kernel of L."""

    def __init__(self, message: str = "Right-hand side not orthogonal to the kernel") -> None:
        """Init."""
        super().__init__(message)


def _l2(f: Field2D) -> float:
    return math.sqrt(inner_product(f, f))


def apply_L(f: Field2D, q: Field2D) -> Field2D:  # noqa: N802
    """(-Delta + 1 - 2Q) f."""
    if f.grid != q.grid:
        raise GridMismatchError
    return helmholtz(f) - 2.0 * q * f


def _operator(q: Field2D, func: Callable[[Field2D], Field2D]) -> LinearOperator:
    grid = q.grid
    size = grid.Nx * grid.Ny

    def matvec(v: NDArray[np.float64]) -> NDArray[np.float64]:
        field = Field2D(grid, np.asarray(v, dtype=np.float64).reshape(grid.shape))
        return func(field).values.ravel()

    return LinearOperator((size, size), matvec=matvec, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class EigenPair:
    """L chi0 = -lambda0 chi0 with chi0 positive and of unit L2 norm."""

    lambda0: float
    chi0: Field2D
    residual: float


def negative_eigenpair(q: Field2D, tol: float = EIGEN_TOL, max_iter: int = 2000) -> EigenPair:
    """Bottom of the spectrum by LOBPCG, preconditioned with (-Delta + 1)^-1 and started at Q.

    Raises:
        NonConvergenceError: the residual |L chi0 + lambda0 chi0| stays above tol.
    """
    if tol > EIGEN_TOL:
        msg = f"tol must be at most {EIGEN_TOL}, got {tol}"
        raise ValueError(msg)
    grid = q.grid
    a_op = _operator(q, lambda f: apply_L(f, q))
    m_op = _operator(q, bessel_potential)
    start = (q.values / np.linalg.norm(q.values)).reshape(-1, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        values, vectors = lobpcg(a_op, start, M=m_op, tol=0.01 * tol, maxiter=max_iter, largest=False)
    vec = vectors[:, 0]
    if vec.sum() < 0.0:
        vec = -vec
    chi0 = Field2D(grid, vec.reshape(grid.shape) / math.sqrt(grid.cell))
    chi0 = chi0 / _l2(chi0)
    lambda0 = -inner_product(apply_L(chi0, q), chi0)
    residual = _l2(apply_L(chi0, q) + lambda0 * chi0)
    logger.info(f"lambda0 = {lambda0:.12f} (lobpcg {-float(values[0]):.12f}), residual {residual:.2e}")
    if residual > tol or lambda0 <= 0.0:
        msg = f"eigen-residual {residual:.2e} above {tol:.0e} (lambda0 = {lambda0})"
        raise NonConvergenceError(msg)
    return EigenPair(lambda0=lambda0, chi0=chi0, residual=residual)


def angular_spread(
    f: Field2D, radii: NDArray[np.float64], center: tuple[float, float] = (0.0, 0.0), n_angles: int = 16
) -> float:
    """max over radii of (angular std / |angular mean|) of f sampled on circles."""
    theta = 2.0 * math.pi * np.arange(n_angles) / n_angles
    worst = 0.0
    for r in radii:
        points = np.column_stack((center[0] + r * np.cos(theta), center[1] + r * np.sin(theta)))
        values = sample_spectral(f, points)
        worst = max(worst, float(values.std() / abs(values.mean())))
    return worst


class PlateauReport(NamedTuple):
    """chi0(r) / K0(sqrt(1 + lambda0) r) on the tail window."""

    kappa0: float
    spread: float


def tail_plateau(pair: EigenPair, window: tuple[float, float] = PLATEAU_WINDOW, n: int = 21) -> PlateauReport:
    """Ratio of the eigenfunction to its Bessel tail along the positive x axis."""
    radii = np.linspace(*window, n)
    values = sample_spectral(pair.chi0, np.column_stack((radii, np.zeros_like(radii))))
    ratio = values / special.k0(math.sqrt(1.0 + pair.lambda0) * radii)
    mean = float(ratio.mean())
    return PlateauReport(kappa0=mean, spread=float((ratio.max() - ratio.min()) / abs(mean)))


class KernelReport(NamedTuple):
    """Relative residuals |L dxQ|/|dxQ|, |L dyQ|/|dyQ| and |L LambdaQ + Q|/|Q|."""

    dx: float
    dy: float
    scaling: float


def kernel_residuals(q: Field2D, lam: Field2D) -> KernelReport:
    dxq = derivative(q, Axis.X)
    dyq = derivative(q, Axis.Y)
    return KernelReport(
        dx=_l2(apply_L(dxq, q)) / _l2(dxq),
        dy=_l2(apply_L(dyq, q)) / _l2(dyq),
        scaling=_l2(apply_L(lam, q) + q) / _l2(q),
    )


def _project(f: Field2D, basis: list[Field2D]) -> Field2D:
    """Remove the components of f along mutually orthogonal ``basis`` fields."""
    for e in basis:
        f = f - (inner_product(f, e) / inner_product(e, e)) * e
    return f


def solve_L(h: Field2D, q: Field2D, tol: float = 1e-12, kernel_tol: float = KERNEL_TOL) -> Field2D:  # noqa: N802
    """Solve L f = h with f orthogonal to dxQ and dyQ, by preconditioned MINRES.

    Raises:
        IllPosedError: h has a relative component above kernel_tol along dxQ or dyQ.
        NonConvergenceError: MINRES stopped early.
    """
    grid = q.grid
    h_norm = _l2(h)
    if h_norm == 0.0:
        return Field2D.zeros(grid)
    kernel = [derivative(q, Axis.X), derivative(q, Axis.Y)]
    for e in kernel:
        component = abs(inner_product(h, e)) / (h_norm * _l2(e))
        if component > kernel_tol:
            msg = f"relative kernel component {component:.2e} above {kernel_tol:.0e}"
            raise IllPosedError(msg)
    rhs = _project(h, kernel)

    a_op = _operator(q, lambda f: _project(apply_L(_project(f, kernel), q), kernel))
    m_op = _operator(q, bessel_potential)
    solution, info = minres(a_op, rhs.values.ravel(), M=m_op, rtol=tol, maxiter=5000)
    if info != 0:
        msg = f"MINRES stopped with info = {info}"
        raise NonConvergenceError(msg)
    f = _project(Field2D(grid, solution.reshape(grid.shape)), kernel)
    logger.debug(f"solve_L residual {_l2(apply_L(f, q) - h) / h_norm:.2e}")
    return f


def rayleigh_quotient(f: Field2D, q: Field2D) -> float:
    return inner_product(apply_L(f, q), f) / inner_product(f, f)


class CoercivityReport(NamedTuple):
    min_quotient: float
    quotients: NDArray[np.float64]


def random_bumps(
    grid: Grid2D, rng: np.random.Generator, n_bumps: int = 4, reach: tuple[float, float] = (6.0, 6.0)
) -> Field2D:
    """Sum of Gaussians with random centers, widths in [0.5, 2] and normal amplitudes."""
    xx, yy = grid.mesh
    values = np.zeros(grid.shape)
    for _ in range(n_bumps):
        cx = rng.uniform(-reach[0], reach[0])
        cy = rng.uniform(-reach[1], reach[1])
        width = rng.uniform(0.5, 2.0)
        values += rng.normal() * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * width**2))
    return Field2D(grid, values)


def coercivity_sample(q: Field2D, n_samples: int = 100, seed: int = 0) -> CoercivityReport:
    """Smallest <Lf, f>/|f|^2 over random smooth f orthogonal to dxQ, dyQ and Q."""
    if n_samples < 100:  # noqa: PLR2004
        msg = f"n_samples must be at least 100, got {n_samples}"
        raise ValueError(msg)
    rng = np.random.default_rng(seed)
    basis = [derivative(q, Axis.X), derivative(q, Axis.Y), q]
    quotients = np.array(
        [rayleigh_quotient(_project(random_bumps(q.grid, rng), basis), q) for _ in range(n_samples)]
    )
    report = CoercivityReport(min_quotient=float(quotients.min()), quotients=quotients)
    logger.info(f"coercivity: min Rayleigh quotient {report.min_quotient:.6f} over {n_samples} samples")
    return report
