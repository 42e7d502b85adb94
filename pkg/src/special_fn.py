"""
Modified Bessel function of the first kind in log space.

Every vMF normalizer in this package goes through :math:`\\log I_\\nu(\\kappa)`
with :math:`\\nu = d/2 - 1`. No single expansion is accurate over the whole
range the landscape and the trainer touch (``0 <= nu <= 1024``,
``0 <= kappa <= 1e8``), so evaluation is split into three regimes:

- ``series``: the ascending power series, used while kappa is small relative
  to nu (all terms positive, no cancellation);
- ``uniform_asymptotic``: the Debye expansion in :math:`1/\\nu`, used for
  ``nu >= 8`` above the series limit;
- ``large_argument``: the Hankel expansion in :math:`1/\\kappa`, used for
  ``nu < 8`` and ``kappa > 50``.

All regimes compute the scaled value :math:`\\log I_\\nu(\\kappa) - \\kappa`
natively, so large arguments never overflow.
"""
from __future__ import annotations

from enum import Enum
from functools import lru_cache
from typing import List, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial
from numpy.typing import ArrayLike, NDArray
from scipy.special import gammaln

from .errors import DomainError

ArrayOrFloat = Union[float, NDArray[np.float64]]

SERIES_RTOL = 1e-17
SERIES_MAX_TERMS = 500
UNIFORM_MIN_ORDER = 8.0
UNIFORM_TERMS = 14
LARGE_ARGUMENT_MIN_KAPPA = 50.0
LARGE_ARGUMENT_MAX_TERMS = 120
RATIO_CF_MARGIN = 50.0
RATIO_CF_MAX_ITER = 20000
RATIO_CF_TOL = 1e-15
_TINY = 1e-300
_LOG_2PI = float(np.log(2.0 * np.pi))


class EvalRegime(str, Enum):
    """Expansion used to evaluate ``log I_nu(kappa)`` at a given point."""

    SERIES = "series"
    UNIFORM_ASYMPTOTIC = "uniform_asymptotic"
    LARGE_ARGUMENT = "large_argument"


def _check_order(nu: float) -> float:
    nu = float(nu)
    if not np.isfinite(nu) or nu < 0:
        raise DomainError(f"Bessel order must be finite and >= 0, got {nu}")
    return nu


def _as_kappa(kappa: ArrayLike) -> Tuple[NDArray[np.float64], bool]:
    scalar = np.ndim(kappa) == 0
    arr = np.atleast_1d(np.asarray(kappa, dtype=float))
    bad = ~np.isfinite(arr) | (arr < 0)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DomainError(
            f"Bessel argument must be finite and >= 0, got {arr[idx]}",
            location=idx,
        )
    return arr, scalar


def _unwrap(values: NDArray[np.float64], scalar: bool) -> ArrayOrFloat:
    if scalar:
        return float(values.reshape(-1)[0])
    return values


def _series_limit(nu: float) -> float:
    """Largest kappa evaluated by the ascending series for order ``nu``."""
    if nu < UNIFORM_MIN_ORDER:
        return LARGE_ARGUMENT_MIN_KAPPA
    return 2.0 * float(np.sqrt(nu + 1.0))


def select_regime(nu: float, kappa: float) -> EvalRegime:
    """Return the regime used for ``(nu, kappa)``; a pure function of its arguments."""
    nu = _check_order(nu)
    k, _ = _as_kappa(kappa)
    if k[0] <= _series_limit(nu):
        return EvalRegime.SERIES
    if nu < UNIFORM_MIN_ORDER:
        return EvalRegime.LARGE_ARGUMENT
    return EvalRegime.UNIFORM_ASYMPTOTIC


def regime_boundaries(nu: float) -> List[Tuple[float, EvalRegime, EvalRegime]]:
    """Kappa values where the regime switches, as ``(kappa, below, above)``."""
    nu = _check_order(nu)
    above = EvalRegime.LARGE_ARGUMENT if nu < UNIFORM_MIN_ORDER else EvalRegime.UNIFORM_ASYMPTOTIC
    return [(_series_limit(nu), EvalRegime.SERIES, above)]


def _series_scaled(nu: float, kappa: NDArray[np.float64]) -> NDArray[np.float64]:
    """log I_nu(kappa) - kappa from the ascending series, kappa > 0."""
    quarter_sq = 0.25 * kappa * kappa
    term = np.ones_like(kappa)
    total = np.ones_like(kappa)
    active = np.ones(kappa.shape, dtype=bool)
    for k in range(1, SERIES_MAX_TERMS):
        term = term * quarter_sq / (k * (k + nu))
        total = total + np.where(active, term, 0.0)
        active &= term > SERIES_RTOL * total
        if not active.any():
            break
    return nu * np.log(0.5 * kappa) - gammaln(nu + 1.0) + np.log(total) - kappa


def _large_argument_scaled(nu: float, kappa: NDArray[np.float64]) -> NDArray[np.float64]:
    """log I_nu(kappa) - kappa from the Hankel expansion, small nu and large kappa."""
    four_nu_sq = 4.0 * nu * nu
    term = np.ones_like(kappa)
    total = np.ones_like(kappa)
    active = np.ones(kappa.shape, dtype=bool)
    for k in range(1, LARGE_ARGUMENT_MAX_TERMS):
        odd = 2 * k - 1
        term = term * -(four_nu_sq - odd * odd) / (8.0 * k * kappa)
        total = total + np.where(active, term, 0.0)
        # half-integer orders terminate with an exact zero term
        active &= np.abs(term) > SERIES_RTOL * np.abs(total)
        if not active.any():
            break
    return -0.5 * (_LOG_2PI + np.log(kappa)) + np.log(total)


@lru_cache(maxsize=1)
def _debye_polynomials() -> Tuple[Polynomial, ...]:
    """u_k(p) of the uniform expansion, built from the standard recurrence.

    u_{k+1}(p) = p^2 (1 - p^2) u_k'(p) / 2 + (1/8) int_0^p (1 - 5 t^2) u_k(t) dt
    """
    lift = Polynomial([0.0, 0.0, 0.5, 0.0, -0.5])
    weight = Polynomial([1.0, 0.0, -5.0])
    polys = [Polynomial([1.0])]
    for _ in range(1, UNIFORM_TERMS):
        u = polys[-1]
        polys.append(lift * u.deriv() + 0.125 * (weight * u).integ())
    return tuple(polys)


def _uniform_scaled(nu: float, kappa: NDArray[np.float64]) -> NDArray[np.float64]:
    """log I_nu(kappa) - kappa from the Debye expansion, nu >= 8, kappa > 0."""
    z = kappa / nu
    root = np.hypot(1.0, z)
    p = 1.0 / root
    correction = np.zeros_like(kappa)
    scale = 1.0
    for u in _debye_polynomials():
        correction = correction + u(p) / scale
        scale *= nu
    # nu * eta - kappa, with eta = sqrt(1+z^2) + log(z / (1 + sqrt(1+z^2)))
    exponent = nu / (root + z) - nu * np.arcsinh(1.0 / z)
    return (
        -0.5 * (_LOG_2PI + np.log(nu))
        - 0.5 * np.log(root)
        + exponent
        + np.log(correction)
    )


def _scaled(nu: float, kappa: NDArray[np.float64]) -> NDArray[np.float64]:
    out = np.empty_like(kappa)
    zero = kappa == 0
    out[zero] = 0.0 if nu == 0 else -np.inf
    series = ~zero & (kappa <= _series_limit(nu))
    rest = ~zero & ~series
    if series.any():
        out[series] = _series_scaled(nu, kappa[series])
    if rest.any():
        expansion = _large_argument_scaled if nu < UNIFORM_MIN_ORDER else _uniform_scaled
        out[rest] = expansion(nu, kappa[rest])
    return out


def log_bessel_i_scaled_limit(nu: float, kappa: ArrayLike) -> ArrayOrFloat:
    """
    Scaled log Bessel function: ``log I_nu(kappa) - kappa``.

    Finite for every ``kappa > 0`` up to at least 1e8; used wherever large
    concentrations must cancel against each other (the MLS expression).

    Args:
        nu: Order, ``nu >= 0``.
        kappa: Argument(s), ``kappa >= 0``; scalar or array.

    Returns:
        float for scalar ``kappa``, ndarray otherwise. ``-inf`` at
        ``kappa = 0`` for ``nu > 0`` and ``0`` for ``nu = 0``.

    Raises:
        DomainError: negative or non-finite arguments.
    """
    nu = _check_order(nu)
    k, scalar = _as_kappa(kappa)
    with np.errstate(divide="ignore"):
        return _unwrap(_scaled(nu, k), scalar)


def log_bessel_i(nu: float, kappa: ArrayLike) -> ArrayOrFloat:
    """
    ``log I_nu(kappa)`` for ``nu >= 0`` and ``kappa >= 0``.

    ``I_nu(0) = 0`` for ``nu > 0``, so the result there is ``-inf``; callers
    that need the ``kappa -> 0`` limit of a normalizer use the closed-form
    limit instead of this value.
    """
    nu = _check_order(nu)
    k, scalar = _as_kappa(kappa)
    with np.errstate(divide="ignore"):
        return _unwrap(_scaled(nu, k) + k, scalar)


def _ratio_continued_fraction(nu: float, kappa: NDArray[np.float64]) -> NDArray[np.float64]:
    """I_{nu+1}/I_nu = 1 / (b_1 + 1 / (b_2 + ...)), b_j = 2 (nu + j) / kappa (modified Lentz)."""
    f = np.full_like(kappa, _TINY)
    c = f.copy()
    d = np.zeros_like(kappa)
    active = np.ones(kappa.shape, dtype=bool)
    for j in range(1, RATIO_CF_MAX_ITER + 1):
        b = 2.0 * (nu + j) / kappa
        d = b + d
        d = np.where(d == 0.0, _TINY, d)
        c = b + 1.0 / c
        c = np.where(c == 0.0, _TINY, c)
        d = 1.0 / d
        delta = c * d
        f = np.where(active, f * delta, f)
        active &= np.abs(delta - 1.0) > RATIO_CF_TOL
        if not active.any():
            break
    return f


def bessel_ratio(nu: float, kappa: ArrayLike) -> ArrayOrFloat:
    """
    Bessel ratio ``R_nu(kappa) = I_{nu+1}(kappa) / I_nu(kappa)``.

    The derivative kernel of the log Bessel function:
    ``d/dkappa log I_nu(kappa) = R_nu(kappa) + nu / kappa``. Lies in
    ``[0, 1)``, equals 0 at ``kappa = 0`` and increases towards 1.

    Uses the Gauss continued fraction while ``kappa <= nu + 50`` (where it
    converges in a few hundred steps at most) and the difference of scaled
    log Bessel values above that.
    """
    nu = _check_order(nu)
    k, scalar = _as_kappa(kappa)
    out = np.zeros_like(k)
    near = (k > 0) & (k <= nu + RATIO_CF_MARGIN)
    far = k > nu + RATIO_CF_MARGIN
    if near.any():
        out[near] = _ratio_continued_fraction(nu, k[near])
    if far.any():
        out[far] = np.exp(_scaled(nu + 1.0, k[far]) - _scaled(nu, k[far]))
    return _unwrap(out, scalar)
