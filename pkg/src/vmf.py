"""
The r-radius von Mises-Fisher distribution.

Densities are taken with respect to the surface measure of the sphere of
radius ``r``:

    p(z) = C_d(kappa) * exp(kappa * mu^T z / r) * r^{-(d-1)}

with ``C_d(kappa) = kappa^nu / ((2 pi)^{d/2} I_nu(kappa))`` and ``nu = d/2 - 1``.
The closed-form MLS (``mls`` module) carries a total ``-d log r``; the Monte
Carlo oracle below integrates against the surface measure, which yields
``-(d-1) log r``, and subtracts the remaining ``log r`` so both sides use the
same convention.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import gammaln, logsumexp

from .errors import DomainError
from .special_fn import bessel_ratio, log_bessel_i_scaled_limit

logger = logging.getLogger(__name__)

KAPPA_LIMIT = 1e-12
UNIT_NORM_TOL = 1e-9
SPHERE_RTOL = 1e-6
MC_MIN_SAMPLES = 1000
MC_CHUNK = 100_000
LOG_2PI = math.log(2.0 * math.pi)

SpherePoint = NDArray[np.float64]


class SphereConfig(BaseModel):
    """Embedding dimension ``d`` and hypersphere radius ``r`` (temperature ``1/r^2``)."""

    model_config = ConfigDict(frozen=True)

    d: int = Field(ge=2, description="Ambient dimension; embeddings live on S^{d-1}")
    r: float = Field(gt=0, allow_inf_nan=False, description="Radius of the hypersphere")

    @property
    def nu(self) -> float:
        """Bessel order d/2 - 1."""
        return self.d / 2.0 - 1.0

    @property
    def tau(self) -> float:
        return 1.0 / (self.r * self.r)

    @classmethod
    def from_temperature(cls, d: int, tau: float) -> "SphereConfig":
        from .contrastive import radius_from_temperature

        return cls(d=d, r=radius_from_temperature(tau))


@dataclass(frozen=True)
class StochasticEmbedding:
    """A unit mean direction ``mu`` and a positive concentration ``kappa``."""

    mu: NDArray[np.float64]
    kappa: float

    def __post_init__(self) -> None:
        mu = np.array(self.mu, dtype=float)
        if mu.ndim != 1 or mu.size < 2:
            raise DomainError(f"mu must be a vector of length >= 2, got shape {mu.shape}")
        norm = float(np.linalg.norm(mu))
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise DomainError(f"mu must be unit-norm, got norm {norm}")
        kappa = float(self.kappa)
        if not (math.isfinite(kappa) and kappa > 0):
            raise DomainError(f"kappa must be positive and finite, got {kappa}")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "kappa", kappa)

    @classmethod
    def from_direction(cls, direction: ArrayLike, kappa: float) -> "StochasticEmbedding":
        """Build an embedding from any nonzero direction, normalizing it."""
        v = np.asarray(direction, dtype=float)
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            raise DomainError("direction must be nonzero")
        return cls(mu=v / norm, kappa=kappa)

    @property
    def d(self) -> int:
        return int(self.mu.size)


@dataclass(frozen=True)
class MonteCarloEstimate:
    """Importance-sampling estimate of the MLS integral and its standard error."""

    estimate: float
    standard_error: float
    n: int


def log_surface_area(d: int) -> float:
    """Log area of the unit sphere S^{d-1}: log(2 pi^{d/2} / Gamma(d/2))."""
    return math.log(2.0) + 0.5 * d * math.log(math.pi) - float(gammaln(0.5 * d))


def _log_kappa_pow_over_bessel(nu: float, kappa: ArrayLike) -> Union[float, NDArray[np.float64]]:
    """nu * log(kappa) - log I_nu(kappa), continuous down to kappa = 0.

    Below KAPPA_LIMIT the analytic limit log(2^nu Gamma(nu + 1)) is used.
    """
    scalar = np.ndim(kappa) == 0
    k = np.atleast_1d(np.asarray(kappa, dtype=float))
    small = k < KAPPA_LIMIT
    safe = np.where(small, 1.0, k)
    power = nu * np.log(safe) if nu > 0 else 0.0
    value = power - (np.asarray(log_bessel_i_scaled_limit(nu, safe)) + safe)
    limit = nu * math.log(2.0) + float(gammaln(nu + 1.0))
    out = np.where(small, limit, value)
    return float(out[0]) if scalar else out


def log_normalizer(kappa: ArrayLike, cfg: SphereConfig) -> Union[float, NDArray[np.float64]]:
    """
    ``log C_d(kappa) = (d/2 - 1) log kappa - (d/2) log(2 pi) - log I_{d/2-1}(kappa)``.

    Tends to ``-log |S^{d-1}|`` (uniform density on the unit sphere) as
    ``kappa -> 0``.

    Raises:
        DomainError: ``kappa <= 0``.
    """
    k = np.asarray(kappa, dtype=float)
    if np.any(~np.isfinite(k) | (k <= 0)):
        raise DomainError(f"kappa must be positive and finite, got {kappa}")
    return _log_kappa_pow_over_bessel(cfg.nu, kappa) - 0.5 * cfg.d * LOG_2PI


def _check_dim(emb: StochasticEmbedding, cfg: SphereConfig) -> None:
    if emb.d != cfg.d:
        raise DomainError(f"embedding dimension {emb.d} does not match sphere dimension {cfg.d}")


def log_density(z: ArrayLike, emb: StochasticEmbedding, cfg: SphereConfig) -> Union[float, NDArray[np.float64]]:
    """
    Log density of the r-radius vMF at point(s) ``z`` (shape ``(d,)`` or ``(n, d)``).

    Raises:
        DomainError: dimension mismatch, or ``||z||`` off the r-sphere by more
            than 1e-6 relative.
    """
    _check_dim(emb, cfg)
    pts = np.asarray(z, dtype=float)
    if pts.shape[-1] != cfg.d:
        raise DomainError(f"point dimension {pts.shape[-1]} does not match sphere dimension {cfg.d}")
    norms = np.linalg.norm(pts, axis=-1)
    off = np.abs(norms - cfg.r) > SPHERE_RTOL * cfg.r
    if np.any(off):
        raise DomainError(f"point norm {np.max(np.abs(norms - cfg.r)) + cfg.r} is not on the sphere of radius {cfg.r}")
    value = (
        log_normalizer(emb.kappa, cfg)
        + emb.kappa * (pts @ emb.mu) / cfg.r
        - (cfg.d - 1) * math.log(cfg.r)
    )
    return float(value) if np.ndim(value) == 0 else value


def mean_resultant_length(kappa: ArrayLike, d: int) -> Union[float, NDArray[np.float64]]:
    """A_d(kappa) = I_{d/2}(kappa) / I_{d/2-1}(kappa), the expected mu^T z / r."""
    return bessel_ratio(d / 2.0 - 1.0, kappa)


def _sample_cosines(kappa: float, d: int, n: int, rng: np.random.Generator) -> NDArray[np.float64]:
    """Wood's rejection sampler for w = mu^T u."""
    m = d - 1.0
    b = m / (math.sqrt(4.0 * kappa * kappa + m * m) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    # m * log(1 - x0^2) with 1 - x0^2 = 4b / (1 + b)^2
    c = kappa * x0 + m * (math.log(4.0 * b) - 2.0 * math.log1p(b))

    out = np.empty(n)
    filled = 0
    while filled < n:
        need = n - filled
        size = need + need // 4 + 16
        z = rng.beta(0.5 * m, 0.5 * m, size=size)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.uniform(size=size)
        with np.errstate(divide="ignore"):
            accept = kappa * w + m * np.log(1.0 - x0 * w) - c >= np.log(u)
        taken = w[accept][:need]
        out[filled:filled + taken.size] = taken
        filled += taken.size
    return out


def sample_directions(
    mu: ArrayLike,
    kappa: float,
    n: int,
    rng: np.random.Generator,
) -> NDArray[np.float64]:
    """Draw ``n`` unit vectors from vMF(mu, kappa); returns shape ``(n, d)``."""
    mu = np.asarray(mu, dtype=float)
    d = mu.size
    w = _sample_cosines(kappa, d, n, rng)
    v = rng.standard_normal((n, d))
    v -= np.outer(v @ mu, mu)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return w[:, None] * mu + np.sqrt(np.clip(1.0 - w * w, 0.0, None))[:, None] * v


def sample(
    emb: StochasticEmbedding,
    cfg: SphereConfig,
    rng_seed: int,
    n: int,
) -> NDArray[np.float64]:
    """
    Draw ``n`` points from the r-radius vMF (Ulrich-Wood rejection sampling).

    Returns an ``(n, d)`` array; every row has norm ``r``.
    """
    _check_dim(emb, cfg)
    if n < 1:
        raise DomainError(f"sample count must be >= 1, got {n}")
    rng = np.random.default_rng(rng_seed)
    return cfg.r * sample_directions(emb.mu, emb.kappa, n, rng)


def mc_mls_oracle(
    a: StochasticEmbedding,
    b: StochasticEmbedding,
    cfg: SphereConfig,
    n: int,
    rng_seed: int,
) -> MonteCarloEstimate:
    """
    Monte Carlo estimate of the mutual likelihood score.

    Draws ``z ~ r-vMF(a)``, averages ``p_b(z)`` in the log domain, and takes
    the log; the standard error comes from the delta method,
    ``sd(p_b) / (mean(p_b) sqrt(n))``, which does not depend on a common
    scale of the weights. The estimate is shifted by ``-log r`` to the
    ``-d log r`` convention of the closed form (see module docstring).
    """
    _check_dim(a, cfg)
    _check_dim(b, cfg)
    if n < MC_MIN_SAMPLES:
        raise DomainError(f"Monte Carlo oracle needs n >= {MC_MIN_SAMPLES}, got {n}")
    rng = np.random.default_rng(rng_seed)

    # log p_b(z) = shift + kappa_b (t - 1), t = mu_b^T z / r <= 1
    shift = log_normalizer(b.kappa, cfg) + b.kappa - (cfg.d - 1) * math.log(cfg.r)
    log_weights = np.empty(n)
    done = 0
    while done < n:
        size = min(MC_CHUNK, n - done)
        u = sample_directions(a.mu, a.kappa, size, rng)
        log_weights[done:done + size] = b.kappa * (u @ b.mu - 1.0)
        done += size

    estimate = shift + float(logsumexp(log_weights)) - math.log(n) - math.log(cfg.r)
    scaled = np.exp(log_weights - log_weights.max())
    standard_error = float(scaled.std(ddof=1)) / (float(scaled.mean()) * math.sqrt(n))
    logger.debug("MC MLS oracle: estimate=%.12g se=%.3g n=%d", estimate, standard_error, n)
    return MonteCarloEstimate(estimate=estimate, standard_error=standard_error, n=n)
