"""Periodic 2D grids and Fourier calculus on them."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING, NamedTuple

import numpy as np
from scipy import fft

from zkcollide import DEALIAS_FRACTION, PLACEMENT_TAIL, ZKLabError
from zkcollide.ground_state import RadialProfile, eval_profile

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import ArrayLike, NDArray

logger = logging.getLogger(__name__)

FFT_WORKERS = -1
BOUNDARY_STRIP = 1.0
DECAY_CHECK = 1e-8


class GridMismatchError(ZKLabError):
    """Fields live on different grids."""

    def __init__(self, message: str = "Fields live on different grids") -> None:
        """Init."""
        super().__init__(message)


class NonDecayingInputError(ZKLabError):
    """Input does not decay at the x boundary of the box."""

    def __init__(self, message: str = "Input does not decay near the box boundary") -> None:
        """Init."""
        super().__init__(message)


class BoxTooSmallError(ZKLabError):
    """Profile tail at the box boundary is above the placement threshold."""

    def __init__(self, message: str = "Box too small for the placed profile") -> None:
        """Init."""
        super().__init__(message)


def _is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True)
class Grid2D:
    """Uniform periodic grid on [-Lx, Lx) x [-Ly, Ly), x along axis 0."""

    Lx: float  # noqa: N815
    Ly: float  # noqa: N815
    Nx: int  # noqa: N815
    Ny: int  # noqa: N815

    def __post_init__(self) -> None:
        if not (_is_power_of_two(self.Nx) and _is_power_of_two(self.Ny)):
            msg = f"Nx and Ny must be powers of two, got {self.Nx} x {self.Ny}"
            raise ValueError(msg)
        if self.Lx <= 0.0 or self.Ly <= 0.0:
            msg = "box half-lengths must be positive"
            raise ValueError(msg)

    @property
    def dx(self) -> float:
        return 2.0 * self.Lx / self.Nx

    @property
    def dy(self) -> float:
        return 2.0 * self.Ly / self.Ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.Nx, self.Ny)

    @property
    def cell(self) -> float:
        return self.dx * self.dy

    @cached_property
    def x(self) -> NDArray[np.float64]:
        return -self.Lx + self.dx * np.arange(self.Nx)

    @cached_property
    def y(self) -> NDArray[np.float64]:
        return -self.Ly + self.dy * np.arange(self.Ny)

    @cached_property
    def mesh(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        xx, yy = np.meshgrid(self.x, self.y, indexing="ij")
        return xx, yy

    @cached_property
    def kx(self) -> NDArray[np.float64]:
        """Wavenumbers along x, full FFT ordering, shape (Nx, 1)."""
        return (2.0 * math.pi * fft.fftfreq(self.Nx, d=self.dx))[:, None]

    @cached_property
    def ky(self) -> NDArray[np.float64]:
        """Wavenumbers along y, real FFT ordering, shape (1, Ny // 2 + 1)."""
        return (2.0 * math.pi * fft.rfftfreq(self.Ny, d=self.dy))[None, :]

    @cached_property
    def kx_odd(self) -> NDArray[np.float64]:
        """kx with the Nyquist mode zeroed, for odd derivatives."""
        k = self.kx.copy()
        k[self.Nx // 2, 0] = 0.0
        return k

    @cached_property
    def ky_odd(self) -> NDArray[np.float64]:
        k = self.ky.copy()
        k[0, -1] = 0.0
        return k

    @cached_property
    def k2(self) -> NDArray[np.float64]:
        return self.kx**2 + self.ky**2

    @cached_property
    def dealias_mask(self) -> NDArray[np.bool_]:
        """Two-thirds rule mask in the real-FFT layout."""
        kx_cut = DEALIAS_FRACTION * math.pi / self.dx
        ky_cut = DEALIAS_FRACTION * math.pi / self.dy
        return (np.abs(self.kx) <= kx_cut) & (np.abs(self.ky) <= ky_cut)

    def minimum_image(self, center: tuple[float, float]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Periodic offsets of every grid point from ``center``."""
        xx, yy = self.mesh
        ox = np.mod(xx - center[0] + self.Lx, 2.0 * self.Lx) - self.Lx
        oy = np.mod(yy - center[1] + self.Ly, 2.0 * self.Ly) - self.Ly
        return ox, oy

    def contains(self, center: tuple[float, float]) -> bool:
        return -self.Lx <= center[0] < self.Lx and -self.Ly <= center[1] < self.Ly


@dataclass(frozen=True, eq=False)
class Field2D:
    """Real scalar field on a Grid2D with a lazily computed real-FFT spectrum."""

    grid: Grid2D
    values: NDArray[np.float64]

    def __post_init__(self) -> None:
        if self.values.shape != self.grid.shape:
            msg = f"values of shape {self.values.shape} do not fit grid {self.grid.shape}"
            raise ValueError(msg)
        if not np.all(np.isfinite(self.values)):
            msg = "field values must be finite"
            raise ValueError(msg)

    @cached_property
    def spectrum(self) -> NDArray[np.complex128]:
        return fft.rfft2(self.values, workers=FFT_WORKERS)

    @classmethod
    def from_spectrum(cls, grid: Grid2D, spectrum: NDArray[np.complex128]) -> Field2D:
        values = fft.irfft2(spectrum, s=grid.shape, workers=FFT_WORKERS)
        return cls(grid, values)

    @classmethod
    def zeros(cls, grid: Grid2D) -> Field2D:
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(
        cls,
        grid: Grid2D,
        func: Callable[[NDArray[np.float64], NDArray[np.float64]], ArrayLike],
    ) -> Field2D:
        xx, yy = grid.mesh
        return cls(grid, np.asarray(func(xx, yy), dtype=np.float64))

    def _check(self, other: Field2D) -> None:
        if other.grid != self.grid:
            raise GridMismatchError

    def __add__(self, other: Field2D | float) -> Field2D:
        if isinstance(other, Field2D):
            self._check(other)
            return Field2D(self.grid, self.values + other.values)
        return Field2D(self.grid, self.values + other)

    __radd__ = __add__

    def __sub__(self, other: Field2D | float) -> Field2D:
        if isinstance(other, Field2D):
            self._check(other)
            return Field2D(self.grid, self.values - other.values)
        return Field2D(self.grid, self.values - other)

    def __rsub__(self, other: float) -> Field2D:
        return Field2D(self.grid, other - self.values)

    def __mul__(self, other: Field2D | float | NDArray[np.float64]) -> Field2D:
        if isinstance(other, Field2D):
            self._check(other)
            return Field2D(self.grid, self.values * other.values)
        return Field2D(self.grid, self.values * other)

    __rmul__ = __mul__

    def __truediv__(self, other: float) -> Field2D:
        return Field2D(self.grid, self.values / other)

    def __neg__(self) -> Field2D:
        return Field2D(self.grid, -self.values)

    def __pow__(self, power: int) -> Field2D:
        return Field2D(self.grid, self.values**power)

    @property
    def max_abs(self) -> float:
        return float(np.abs(self.values).max())


class Axis(enum.StrEnum):
    """Differentiation axis."""

    X = "x"
    Y = "y"


def derivative(f: Field2D, axis: Axis | str, order: int = 1) -> Field2D:
    """Spectral derivative; the Nyquist mode is dropped for odd orders."""
    if order not in (1, 2):
        msg = f"order must be 1 or 2, got {order}"
        raise ValueError(msg)
    grid = f.grid
    if Axis(axis) is Axis.X:
        k = grid.kx_odd if order == 1 else grid.kx
    else:
        k = grid.ky_odd if order == 1 else grid.ky
    return Field2D.from_spectrum(grid, (1j * k) ** order * f.spectrum)


def laplacian(f: Field2D) -> Field2D:
    return Field2D.from_spectrum(f.grid, -f.grid.k2 * f.spectrum)


def helmholtz(f: Field2D) -> Field2D:
    """(-Delta + 1) f."""
    return Field2D.from_spectrum(f.grid, (1.0 + f.grid.k2) * f.spectrum)


def bessel_potential(f: Field2D) -> Field2D:
    """(-Delta + 1)^-1 f as the Fourier multiplier (1 + |xi|^2)^-1."""
    return Field2D.from_spectrum(f.grid, f.spectrum / (1.0 + f.grid.k2))


def check_decay(f: Field2D, width: float = BOUNDARY_STRIP, rel: float = DECAY_CHECK) -> None:
    """Raise if f is not small on the strip |x| > Lx - width."""
    grid = f.grid
    strip = np.abs(grid.x) > grid.Lx - width
    peak = f.max_abs
    edge = float(np.abs(f.values[strip]).max()) if strip.any() else 0.0
    if peak > 0.0 and edge >= rel * peak:
        msg = f"boundary strip holds {edge:.3e}, above {rel:.0e} of the peak {peak:.3e}"
        raise NonDecayingInputError(msg)


def antiderivative_x(f: Field2D) -> Field2D:
    """int_x^{Lx} f, the box version of -dx^-1 f.

    The row mean is integrated exactly as a linear ramp and the zero-mean remainder by
    its periodic spectral antiderivative, so the result tends to the full row integral
    at the left edge and to zero at the right edge.

    Raises:
        NonDecayingInputError: f is not negligible near x = +-Lx.
    """
    check_decay(f)
    grid = f.grid
    mean = f.values.mean(axis=0, keepdims=True)
    remainder = fft.rfft(f.values - mean, axis=0, workers=FFT_WORKERS)
    k = 2.0 * math.pi * fft.rfftfreq(grid.Nx, d=grid.dx)
    inverse = np.zeros_like(k, dtype=np.complex128)
    inverse[1:-1] = 1.0 / (1j * k[1:-1])
    periodic = fft.irfft(remainder * inverse[:, None], n=grid.Nx, axis=0, workers=FFT_WORKERS)
    ramp = mean * (grid.Lx - grid.x)[:, None]
    return Field2D(grid, ramp + periodic[:1, :] - periodic)


def row_integral(f: Field2D) -> NDArray[np.float64]:
    """int f dx for every y row."""
    return f.values.sum(axis=0) * f.grid.dx


def inner_product(f: Field2D, g: Field2D) -> float:
    if f.grid != g.grid:
        raise GridMismatchError
    return float(np.vdot(f.values, g.values)) * f.grid.cell


class Norms(NamedTuple):
    """L2, H1 and L3 norms of a field."""

    l2: float
    h1: float
    l3: float


def gradient_energy(f: Field2D) -> float:
    """|grad f|^2 integrated, by Parseval on the real-FFT half spectrum."""
    grid = f.grid
    weights = np.full(grid.ky.shape, 2.0)
    weights[0, 0] = 1.0
    if grid.Ny % 2 == 0:
        weights[0, -1] = 1.0
    power = np.abs(f.spectrum) ** 2 * (grid.kx_odd**2 + grid.ky_odd**2) * weights
    return float(power.sum()) * grid.cell / (grid.Nx * grid.Ny)


def h1_norm(f: Field2D) -> float:
    return math.sqrt(inner_product(f, f) + gradient_energy(f))


def norms(f: Field2D) -> Norms:
    l2_sq = inner_product(f, f)
    l3 = (float(np.sum(np.abs(f.values) ** 3)) * f.grid.cell) ** (1.0 / 3.0)
    return Norms(l2=math.sqrt(l2_sq), h1=math.sqrt(l2_sq + gradient_energy(f)), l3=l3)


def half_cosine_cutoff(x: ArrayLike, x_min: float, width: float = 1.0) -> NDArray[np.float64]:
    """0 for x < x_min, 1 for x > x_min + width, half-cosine ramp in between."""
    s = np.clip((np.asarray(x, dtype=np.float64) - x_min) / width, 0.0, 1.0)
    return 0.5 * (1.0 - np.cos(math.pi * s))


def restricted_h1(f: Field2D, x_min: float) -> float:
    """H1 norm of f over x > x_min with a smooth cutoff of unit width."""
    weight = half_cosine_cutoff(f.grid.x, x_min)[:, None]
    dfx = derivative(f, Axis.X).values
    dfy = derivative(f, Axis.Y).values
    density = f.values**2 + dfx**2 + dfy**2
    return math.sqrt(float(np.sum(weight * density)) * f.grid.cell)


def boundary_strip_mass(f: Field2D, width: float = 4.0) -> float:
    """int f^2 over the frame of the given width along the box boundary."""
    grid = f.grid
    xx, yy = grid.mesh
    frame = (np.abs(xx) > grid.Lx - width) | (np.abs(yy) > grid.Ly - width)
    return float(np.sum(f.values[frame] ** 2)) * grid.cell


def translate(f: Field2D, shift: tuple[float, float]) -> Field2D:
    """Spectral translation, g(x) = f(x - shift)."""
    grid = f.grid
    phase = np.exp(-1j * (grid.kx_odd * shift[0] + grid.ky_odd * shift[1]))
    return Field2D.from_spectrum(grid, f.spectrum * phase)


def sample_spectral(f: Field2D, points: Sequence[tuple[float, float]] | NDArray[np.float64]) -> NDArray[np.float64]:
    """Evaluate the trigonometric interpolant of f at arbitrary points."""
    grid = f.grid
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    full = fft.fft2(f.values, workers=FFT_WORKERS)
    full[grid.Nx // 2, :] = 0.0
    full[:, grid.Ny // 2] = 0.0
    kx = 2.0 * math.pi * fft.fftfreq(grid.Nx, d=grid.dx)
    ky = 2.0 * math.pi * fft.fftfreq(grid.Ny, d=grid.dy)
    ex = np.exp(1j * np.outer(pts[:, 0] + grid.Lx, kx))
    ey = np.exp(1j * np.outer(pts[:, 1] + grid.Ly, ky))
    values = np.sum((ex @ full) * ey, axis=1)
    return values.real / (grid.Nx * grid.Ny)


class ProfileKind(enum.StrEnum):
    """Which radial function of the ground state to place on the grid."""

    Q = "Q"
    LAMBDA = "LambdaQ"
    LAMBDA2 = "Lambda2Q"


def radial_kind(p: RadialProfile, kind: ProfileKind, s: ArrayLike) -> NDArray[np.float64]:
    """Q, LambdaQ = Q + r Q'/2 or Lambda^2 Q = Q + 5 r Q'/4 + r^2 Q''/4 at radii s."""
    r = np.asarray(s, dtype=np.float64)
    q = eval_profile(p, r)
    if kind is ProfileKind.Q:
        return q
    dq = eval_profile(p, r, 1)
    if kind is ProfileKind.LAMBDA:
        return q + 0.5 * r * dq
    return q + 1.25 * r * dq + 0.25 * r**2 * eval_profile(p, r, 2)


def place_profile(
    p: RadialProfile,
    grid: Grid2D,
    center: tuple[float, float] = (0.0, 0.0),
    scale: float = 1.0,
    kind: ProfileKind = ProfileKind.Q,
) -> Field2D:
    """Sample c Q(sqrt(c) (x - center)), or its Lambda / Lambda^2 counterparts.

    Raises:
        BoxTooSmallError: the tail at the nearest boundary exceeds 1e-10 of the peak.
    """
    if scale <= 0.0:
        msg = f"scale must be positive, got {scale}"
        raise ValueError(msg)
    if not grid.contains(center):
        msg = f"center {center} outside the box"
        raise ValueError(msg)

    root = math.sqrt(scale)
    amplitude = scale if kind is ProfileKind.Q else 1.0
    reach = min(grid.Lx - abs(center[0]), grid.Ly - abs(center[1]))
    edge = abs(float(radial_kind(p, kind, root * reach)))
    peak = abs(float(radial_kind(p, kind, 0.0)))
    if edge > PLACEMENT_TAIL * peak:
        msg = f"{kind} tail {edge:.2e} at distance {reach} exceeds {PLACEMENT_TAIL:.0e} of peak"
        raise BoxTooSmallError(msg)

    ox, oy = grid.minimum_image(center)
    radius = root * np.hypot(ox, oy)
    return Field2D(grid, amplitude * radial_kind(p, kind, radius))


def place_shifted(p: RadialProfile, grid: Grid2D, center: tuple[float, float]) -> Field2D:
    """Q(x - center) evaluated with the true, non-periodic distance."""
    xx, yy = grid.mesh
    return Field2D(grid, eval_profile(p, np.hypot(xx - center[0], yy - center[1])))
