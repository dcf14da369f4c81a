"""Bessel K0, its asymptotic series and the translated ground-state expansion."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from fractions import Fraction
from typing import TYPE_CHECKING, NamedTuple

import numpy as np
from scipy import special

from zkcollide import ZKLabError

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

    from zkcollide.ground_state import RadialProfile

logger = logging.getLogger(__name__)

A0 = math.sqrt(math.pi / 2.0)
MAX_SERIES_ORDER = 8
MAX_PQ_ORDER = 3
KAPPA_WINDOW = 5.0
VALIDITY_EXPONENT = 0.49


class DomainError(ZKLabError):
    """Argument outside the domain of the function."""

    def __init__(self, message: str = "Argument outside the domain") -> None:
        """Init."""
        super().__init__(message)


class SeriesDivergenceError(ZKLabError):
    """The asymptotic series is past its optimal truncation."""

    def __init__(self, message: str = "Asymptotic series past optimal truncation") -> None:
        """Init."""
        super().__init__(message)


class TruncationOrderError(ZKLabError):
    """Requested polynomial order is not supported."""

    def __init__(self, message: str = "Unsupported truncation order") -> None:
        """Init."""
        super().__init__(message)


class WindowInstabilityError(ZKLabError):
    """Q/K0 is not flat on the fit window."""

    def __init__(self, message: str = "Q/K0 ratio unstable on the fit window") -> None:
        """Init."""
        super().__init__(message)


def _series_ratio(l: int) -> Fraction:  # noqa: E741
    """a_l / a_0 as an exact rational."""
    ratio = Fraction(1)
    for j in range(1, l + 1):
        ratio *= Fraction(-((2 * j - 1) ** 2), 8 * j)
    return ratio


def series_coefficient(l: int) -> float:  # noqa: E741
    """Coefficient a_l of the large-r expansion of K0."""
    if l < 0:
        msg = "Series index must be non-negative"
        raise ValueError(msg)
    return A0 * float(_series_ratio(l))


def bessel_k0(r: ArrayLike, deriv: int = 0) -> NDArray[np.float64]:
    """Evaluate K0 or one of its first two derivatives.

    K0' = -K1 and, from the Bessel equation, K0'' = K0 + K1 / r.

    Args:
        r: positive radii, any shape.
        deriv: derivative order, 0, 1 or 2.

    Returns:
        Array with the shape of ``r``.
    """
    if deriv not in (0, 1, 2):
        msg = f"deriv must be 0, 1 or 2, got {deriv}"
        raise ValueError(msg)
    radii = np.asarray(r, dtype=np.float64)
    if np.any(radii <= 0.0) or not np.all(np.isfinite(radii)):
        msg = "bessel_k0 is defined for finite r > 0 only"
        raise DomainError(msg)

    if deriv == 0:
        return np.asarray(special.k0(radii), dtype=np.float64)
    k1 = np.asarray(special.k1(radii), dtype=np.float64)
    if deriv == 1:
        return -k1
    return np.asarray(special.k0(radii), dtype=np.float64) + k1 / radii


def lk_series(r: ArrayLike, k: int, deriv: int = 0) -> NDArray[np.float64]:
    """Truncated asymptotic series L_k = exp(-r) sum_{l<=k} a_l r^(-l-1/2).

    Derivatives are taken in closed form term by term.
    """
    if not 0 <= k <= MAX_SERIES_ORDER:
        msg = f"series order must lie in [0, {MAX_SERIES_ORDER}], got {k}"
        raise ValueError(msg)
    if deriv not in (0, 1, 2):
        msg = f"deriv must be 0, 1 or 2, got {deriv}"
        raise ValueError(msg)
    radii = np.asarray(r, dtype=np.float64)
    if np.any(radii < 1.0):
        msg = "lk_series requires r >= 1"
        raise DomainError(msg)
    if k > 0 and (2 * k - 1) ** 2 > 8 * k * float(radii.min()):
        msg = f"term {k} of the series already grows at r = {float(radii.min())}"
        raise SeriesDivergenceError(msg)

    total = np.zeros_like(radii)
    for l in range(k + 1):  # noqa: E741
        p = l + 0.5
        term = radii**-p
        if deriv == 1:
            term = -(term + p * radii ** (-p - 1.0))
        elif deriv == 2:  # noqa: PLR2004
            term = term + 2.0 * p * radii ** (-p - 1.0) + p * (p + 1.0) * radii ** (-p - 2.0)
        total += series_coefficient(l) * term
    return np.exp(-radii) * total


def weighted_series_error(r: ArrayLike, k: int) -> NDArray[np.float64]:
    """r^(k+3/2) e^r |K0(r) - L_k(r)|, bounded in r for fixed k."""
    radii = np.asarray(r, dtype=np.float64)
    return radii ** (k + 1.5) * np.exp(radii) * np.abs(bessel_k0(radii) - lk_series(radii, k))


class KappaEstimate(NamedTuple):
    """Tail constant of Q ~ kappa K0 with its spread over the fit window."""

    kappa: float
    deviation: float


def kappa_on_window(p: RadialProfile, r_lo: float, r_hi: float) -> KappaEstimate:
    """Mean and max deviation of Q/K0 over the profile nodes in [r_lo, r_hi]."""
    mask = (p.nodes >= r_lo) & (p.nodes <= r_hi)
    if not mask.any():
        msg = f"no profile nodes in [{r_lo}, {r_hi}]"
        raise ValueError(msg)
    ratio = p.q[mask] / bessel_k0(p.nodes[mask])
    kappa = float(ratio.mean())
    return KappaEstimate(kappa, float(np.abs(ratio - kappa).max()))


def estimate_kappa(p: RadialProfile) -> KappaEstimate:
    """Fit kappa on [r_max - 5, r_max]."""
    if p.r_max < 20.0:  # noqa: PLR2004
        msg = "estimate_kappa needs r_max >= 20"
        raise ValueError(msg)
    estimate = kappa_on_window(p, p.r_max - KAPPA_WINDOW, p.r_max)
    if estimate.deviation > 1e-2 * estimate.kappa:
        msg = f"kappa deviation {estimate.deviation:.3e} exceeds 1% of {estimate.kappa:.6f}"
        raise WindowInstabilityError(msg)
    logger.debug(f"kappa = {estimate.kappa:.12f} (deviation {estimate.deviation:.2e})")
    return estimate


# Truncated polynomials in (Y^2, X, Ytilde) keyed by exponent triples, weight 2j + m + p.
_Poly = dict[tuple[int, int, int], Fraction]


def _weight(key: tuple[int, int, int]) -> int:
    return 2 * key[0] + key[1] + key[2]


def _binom(a: Fraction, k: int) -> Fraction:
    out = Fraction(1)
    for i in range(k):
        out *= (a - i) / (i + 1)
    return out


def _mul(lhs: _Poly, rhs: _Poly, max_weight: int) -> _Poly:
    out: defaultdict[tuple[int, int, int], Fraction] = defaultdict(Fraction)
    for (j1, m1, p1), c1 in lhs.items():
        for (j2, m2, p2), c2 in rhs.items():
            key = (j1 + j2, m1 + m2, p1 + p2)
            if _weight(key) <= max_weight:
                out[key] += c1 * c2
    return {key: value for key, value in out.items() if value != 0}


def _exp_coefficients(max_weight: int) -> _Poly:
    """Coefficients d_{j,m,p} of exp(-(1+X) Ytilde sum_j Y^2j sum_m c_{j+1,m} X^m)."""
    half = Fraction(1, 2)
    exponent: _Poly = {}
    for j in range(max_weight):
        for m in range(max_weight):
            c = _binom(half, j + 1) * _binom(Fraction(-2 * (j + 1)), m)
            for shift in (0, 1):
                key = (j, m + shift, 1)
                if _weight(key) <= max_weight:
                    exponent[key] = exponent.get(key, Fraction(0)) - c

    result: _Poly = {(0, 0, 0): Fraction(1)}
    power: _Poly = {(0, 0, 0): Fraction(1)}
    for n in range(1, max_weight + 1):
        power = _mul(power, exponent, max_weight)
        for key, value in power.items():
            result[key] = result.get(key, Fraction(0)) + value / math.factorial(n)
    return result


class SeriesCoefficients(NamedTuple):
    """Coefficients a_0..a_K of L_k and the P_q table for q <= q_max.

    ``pq`` rows are (q, power of x, power of y, coefficient).
    """

    a: tuple[float, ...]
    pq: tuple[tuple[int, int, int, float], ...]
    q_max: int

    def evaluate_pq(self, q: int, x: ArrayLike, y: ArrayLike) -> NDArray[np.float64]:
        """Evaluate P_q at (x, y)."""
        if q > self.q_max:
            msg = f"P_{q} not tabulated (q_max = {self.q_max})"
            raise TruncationOrderError(msg)
        xs = np.asarray(x, dtype=np.float64)
        ys = np.asarray(y, dtype=np.float64)
        total = np.zeros(np.broadcast(xs, ys).shape)
        for order, px, py, coefficient in self.pq:
            if order == q:
                total = total + coefficient * xs**px * ys**py
        return total


def pq_coefficients(q_max: int) -> SeriesCoefficients:
    """Build the P_q polynomials by composing the binomial and exponential series.

    All bookkeeping is done in exact rationals relative to a_0; only the final table is
    converted to floats.
    """
    if not 0 <= q_max <= MAX_PQ_ORDER:
        msg = f"q_max must lie in [0, {MAX_PQ_ORDER}], got {q_max}"
        raise TruncationOrderError(msg)

    d = _exp_coefficients(q_max)
    table: defaultdict[tuple[int, int, int], Fraction] = defaultdict(Fraction)
    for l in range(q_max + 1):  # noqa: E741
        a = Fraction(2 * l + 1, 2)
        for t in range(q_max + 1):
            for s in range(q_max + 1):
                weight_b = l + s + 2 * t
                if weight_b > q_max:
                    continue
                b = _series_ratio(l) * _binom(-a / 2, t) * _binom(-a - 2 * t, s)
                for (j, m, p), dv in d.items():
                    q = weight_b + 2 * j + m + p
                    if q <= q_max:
                        table[(q, s + m, 2 * t + 2 * j + 2 * p)] += b * dv

    rows = tuple(
        (q, px, py, A0 * float(value))
        for (q, px, py), value in sorted(table.items())
        if value != 0
    )
    a_values = tuple(series_coefficient(l) for l in range(MAX_SERIES_ORDER + 1))
    logger.debug(f"P_q table for q_max={q_max}: {len(rows)} monomials")
    return SeriesCoefficients(a=a_values, pq=rows, q_max=q_max)


def q_translated_expansion(  # noqa: PLR0913
    x: ArrayLike,
    y: ArrayLike,
    z: float,
    n: int,
    sc: SeriesCoefficients,
    kappa: float,
) -> NDArray[np.float64]:
    """Q_app^n(x, z) = kappa e^-z z^-1/2 e^-x (a_0 + sum_q P_q(x) z^-q)."""
    if z <= 4.0:  # noqa: PLR2004
        msg = f"translated expansion needs z > 4, got {z}"
        raise DomainError(msg)
    if n > sc.q_max:
        msg = f"order {n} exceeds tabulated q_max {sc.q_max}"
        raise TruncationOrderError(msg)
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    if np.any(np.hypot(xs, ys) > z**VALIDITY_EXPONENT):
        msg = f"|x| must stay below z^{VALIDITY_EXPONENT} = {z**VALIDITY_EXPONENT:.3f}"
        raise DomainError(msg)

    bracket = np.full(np.broadcast(xs, ys).shape, sc.a[0])
    for q in range(1, n + 1):
        bracket = bracket + sc.evaluate_pq(q, xs, ys) / z**q
    return kappa * math.exp(-z) / math.sqrt(z) * np.exp(-xs) * bracket
