"""
Mutual likelihood score between two r-radius vMF embeddings.

For embeddings (mu_a, kappa_a) and (mu_b, kappa_b) on the sphere of radius r
in R^d, with nu = d/2 - 1 and kappa_tilde = ||kappa_a mu_a + kappa_b mu_b||:

    s = nu log(kappa_a kappa_b / kappa_tilde)
        + log(I_nu(kappa_tilde) / (I_nu(kappa_a) I_nu(kappa_b)))
        - d log(sqrt(2 pi) r)

The score only depends on the two concentrations and cos(theta) = mu_a^T mu_b.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from scipy.special import gammaln

from .errors import DegenerateGradientError, DomainError
from .special_fn import bessel_ratio, log_bessel_i_scaled_limit
from .vmf import (
    KAPPA_LIMIT,
    LOG_2PI,
    SphereConfig,
    StochasticEmbedding,
    _log_kappa_pow_over_bessel,
    log_normalizer,
)

logger = logging.getLogger(__name__)

DEGENERATE_KAPPA_TILDE = 1e-10
COS_TOL = 1e-12
CSV_COLUMNS = ["kappa_i", "kappa_j", "cos_theta", "s"]


@dataclass(frozen=True)
class MlsInputs:
    a: StochasticEmbedding
    b: StochasticEmbedding
    cfg: SphereConfig

    def __post_init__(self) -> None:
        if self.a.d != self.cfg.d or self.b.d != self.cfg.d:
            raise DomainError(
                f"embedding dimensions ({self.a.d}, {self.b.d}) do not match sphere dimension {self.cfg.d}"
            )


@dataclass(frozen=True)
class MlsGradients:
    """Gradients of the score; mu components are projected onto the tangent spaces."""

    d_mu_a: NDArray[np.float64]
    d_mu_b: NDArray[np.float64]
    d_kappa_a: float
    d_kappa_b: float


@dataclass(frozen=True)
class LandscapeGrid:
    """Scores over kappa_i x kappa_j x cos(theta); ``values[i, j, k]``."""

    kappa_axis: NDArray[np.float64]
    cos_theta_axis: NDArray[np.float64]
    values: NDArray[np.float64]
    cfg: SphereConfig

    def to_frame(self) -> pd.DataFrame:
        """One row per cell, kappa_i outermost and cos_theta innermost."""
        ki, kj, c = np.meshgrid(self.kappa_axis, self.kappa_axis, self.cos_theta_axis, indexing="ij")
        return pd.DataFrame(
            {
                "kappa_i": ki.ravel(),
                "kappa_j": kj.ravel(),
                "cos_theta": c.ravel(),
                "s": self.values.ravel(),
            },
            columns=CSV_COLUMNS,
        )

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        self.to_frame().to_csv(
            path,
            index=False,
            float_format="%.17g",
            lineterminator="\n",
            encoding="utf-8",
        )
        return path


@dataclass(frozen=True)
class OrderingReport:
    """The qualitative orderings of the landscape at a pinned (d, r)."""

    cfg: SphereConfig
    kappa_high: float
    kappa_high_disagree: float
    kappa_low: float
    confident_agreement: bool
    confident_disagreement: bool
    increasing_in_cos: bool
    scores: Dict[str, float] = field(default_factory=dict)

    @property
    def all_hold(self) -> bool:
        return self.confident_agreement and self.confident_disagreement and self.increasing_in_cos


def _check_positive(values: NDArray[np.float64], name: str) -> None:
    bad = ~np.isfinite(values) | (values <= 0)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(np.atleast_1d(bad))[0])
        raise DomainError(
            f"{name} must be positive and finite, got {np.atleast_1d(values)[idx]}",
            location=idx,
        )


def _score_core(
    kappa_a: NDArray[np.float64],
    kappa_b: NDArray[np.float64],
    cos_theta: NDArray[np.float64],
    kappa_tilde: NDArray[np.float64],
    cfg: SphereConfig,
) -> NDArray[np.float64]:
    """Stable evaluation of the score; every sum is ordered so that (a, b) swaps are exact."""
    nu = cfg.nu
    log_const = -0.5 * cfg.d * LOG_2PI - cfg.d * math.log(cfg.r)

    degenerate = kappa_tilde < KAPPA_LIMIT
    kt = np.where(degenerate, 1.0, kappa_tilde)
    scaled_a = np.asarray(log_bessel_i_scaled_limit(nu, kappa_a))
    scaled_b = np.asarray(log_bessel_i_scaled_limit(nu, kappa_b))
    scaled_t = np.asarray(log_bessel_i_scaled_limit(nu, kt))

    if nu == 0:
        power_ab = np.zeros_like(kappa_a)
        power_t = np.zeros_like(kt)
    else:
        power_ab = nu * (np.log(kappa_a) + np.log(kappa_b))
        power_t = nu * np.log(kt)

    # kappa_tilde - kappa_a - kappa_b without cancellation
    gap = 2.0 * (kappa_a * kappa_b) * (cos_theta - 1.0) / (kappa_tilde + (kappa_a + kappa_b))
    regular = (power_ab - power_t) + (scaled_t - (scaled_a + scaled_b)) + gap

    # kappa_tilde -> 0: nu log(kappa_tilde) - log I_nu(kappa_tilde) -> log(2^nu Gamma(nu + 1))
    limit = (
        power_ab
        - (scaled_a + scaled_b)
        - (kappa_a + kappa_b)
        - (nu * math.log(2.0) + float(gammaln(nu + 1.0)))
    )
    return np.where(degenerate, limit, regular) + log_const


def kappa_tilde_from_cos(
    kappa_a: ArrayLike, kappa_b: ArrayLike, cos_theta: ArrayLike
) -> NDArray[np.float64]:
    """sqrt(kappa_a^2 + kappa_b^2 + 2 kappa_a kappa_b cos(theta)), written as a sum of nonnegatives."""
    ka = np.asarray(kappa_a, dtype=float)
    kb = np.asarray(kappa_b, dtype=float)
    c = np.asarray(cos_theta, dtype=float)
    diff = ka - kb
    return np.sqrt(diff * diff + 2.0 * (ka * kb) * (1.0 + c))


def kappa_tilde(a: StochasticEmbedding, b: StochasticEmbedding) -> float:
    """||kappa_a mu_a + kappa_b mu_b||."""
    if a.d != b.d:
        raise DomainError(f"embedding dimensions differ: {a.d} vs {b.d}")
    return float(np.linalg.norm(a.kappa * a.mu + b.kappa * b.mu))


def _pair_arrays(
    mu_a: ArrayLike, kappa_a: ArrayLike, mu_b: ArrayLike, kappa_b: ArrayLike, cfg: SphereConfig
) -> Tuple[NDArray[np.float64], ...]:
    mu_a = np.asarray(mu_a, dtype=float)
    mu_b = np.asarray(mu_b, dtype=float)
    if mu_a.shape[-1] != cfg.d or mu_b.shape[-1] != cfg.d:
        raise DomainError(
            f"embedding dimensions ({mu_a.shape[-1]}, {mu_b.shape[-1]}) do not match sphere dimension {cfg.d}"
        )
    ka = np.asarray(kappa_a, dtype=float)
    kb = np.asarray(kappa_b, dtype=float)
    _check_positive(ka, "kappa_a")
    _check_positive(kb, "kappa_b")
    batch = np.broadcast_shapes(mu_a.shape[:-1], mu_b.shape[:-1], ka.shape, kb.shape)
    mu_a = np.broadcast_to(mu_a, batch + (cfg.d,))
    mu_b = np.broadcast_to(mu_b, batch + (cfg.d,))
    ka = np.broadcast_to(ka, batch)
    kb = np.broadcast_to(kb, batch)
    cos_theta = np.clip(np.sum(mu_a * mu_b, axis=-1), -1.0, 1.0)
    resultant = ka[..., None] * mu_a + kb[..., None] * mu_b
    kt = np.linalg.norm(resultant, axis=-1)
    return mu_a, ka, mu_b, kb, cos_theta, resultant, kt


def mls_score_arrays(
    mu_a: ArrayLike,
    kappa_a: ArrayLike,
    mu_b: ArrayLike,
    kappa_b: ArrayLike,
    cfg: SphereConfig,
) -> NDArray[np.float64]:
    """Scores for stacked pairs; ``mu_*`` have shape ``(..., d)`` and broadcast with ``kappa_*``."""
    _, ka, _, kb, cos_theta, _, kt = _pair_arrays(mu_a, kappa_a, mu_b, kappa_b, cfg)
    return _score_core(ka, kb, cos_theta, kt, cfg)


def mls_grad_arrays(
    mu_a: ArrayLike,
    kappa_a: ArrayLike,
    mu_b: ArrayLike,
    kappa_b: ArrayLike,
    cfg: SphereConfig,
) -> Tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """
    Analytic gradients for stacked pairs: ``(d_mu_a, d_mu_b, d_kappa_a, d_kappa_b)``.

    With R = I_{nu+1}/I_nu:
        ds/dkappa_a = R(kappa_tilde) (kappa_a + kappa_b cos) / kappa_tilde - R(kappa_a)
        ds/dmu_a    = R(kappa_tilde) kappa_a (kappa_a mu_a + kappa_b mu_b) / kappa_tilde,
    the latter projected onto the tangent space of mu_a.

    Raises:
        DegenerateGradientError: kappa_tilde <= 1e-10 for some pair.
    """
    mu_a, ka, mu_b, kb, cos_theta, resultant, kt = _pair_arrays(mu_a, kappa_a, mu_b, kappa_b, cfg)
    degenerate = kt <= DEGENERATE_KAPPA_TILDE
    if degenerate.any():
        idx = tuple(int(i) for i in np.argwhere(np.atleast_1d(degenerate))[0])
        raise DegenerateGradientError(
            f"MLS gradient is not defined at kappa_tilde={np.atleast_1d(kt)[idx]:.3g} (antipodal pair)",
            location=idx,
        )
    nu = cfg.nu
    r_t = np.asarray(bessel_ratio(nu, kt))
    r_a = np.asarray(bessel_ratio(nu, ka))
    r_b = np.asarray(bessel_ratio(nu, kb))

    d_kappa_a = r_t * (ka + kb * cos_theta) / kt - r_a
    d_kappa_b = r_t * (kb + ka * cos_theta) / kt - r_b

    g_a = (r_t * ka / kt)[..., None] * resultant
    g_b = (r_t * kb / kt)[..., None] * resultant
    d_mu_a = tangent_projection(g_a, mu_a)
    d_mu_b = tangent_projection(g_b, mu_b)
    return d_mu_a, d_mu_b, d_kappa_a, d_kappa_b


def tangent_projection(grad: NDArray[np.float64], mu: NDArray[np.float64]) -> NDArray[np.float64]:
    """Remove the radial component of ``grad`` at unit vector(s) ``mu``."""
    return grad - np.sum(grad * mu, axis=-1, keepdims=True) * mu


def mls_score(inputs: MlsInputs) -> float:
    """The mutual likelihood score of two embeddings; symmetric in (a, b)."""
    a, b = inputs.a, inputs.b
    return float(mls_score_arrays(a.mu, a.kappa, b.mu, b.kappa, inputs.cfg))


def mls_grad(inputs: MlsInputs) -> MlsGradients:
    """Analytic gradients of :func:`mls_score`; see :func:`mls_grad_arrays`."""
    a, b = inputs.a, inputs.b
    d_mu_a, d_mu_b, d_ka, d_kb = mls_grad_arrays(a.mu, a.kappa, b.mu, b.kappa, inputs.cfg)
    return MlsGradients(
        d_mu_a=np.asarray(d_mu_a),
        d_mu_b=np.asarray(d_mu_b),
        d_kappa_a=float(d_ka),
        d_kappa_b=float(d_kb),
    )


def mls_landscape_arrays(
    kappa_a: ArrayLike, kappa_b: ArrayLike, cos_theta: ArrayLike, cfg: SphereConfig
) -> NDArray[np.float64]:
    """Vectorized :func:`mls_landscape`; arguments broadcast against each other."""
    ka, kb, c = np.broadcast_arrays(
        np.asarray(kappa_a, dtype=float),
        np.asarray(kappa_b, dtype=float),
        np.asarray(cos_theta, dtype=float),
    )
    _check_positive(ka, "kappa_a")
    _check_positive(kb, "kappa_b")
    bad = ~np.isfinite(c) | (np.abs(c) > 1.0 + COS_TOL)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(np.atleast_1d(bad))[0])
        raise DomainError(f"cos_theta must lie in [-1, 1], got {np.atleast_1d(c)[idx]}", location=idx)
    c = np.clip(c, -1.0, 1.0)
    return _score_core(ka, kb, c, kappa_tilde_from_cos(ka, kb, c), cfg)


def mls_landscape(kappa_a: float, kappa_b: float, cos_theta: float, cfg: SphereConfig) -> float:
    """The score as a function of (kappa_a, kappa_b, cos(theta)) only."""
    return float(mls_landscape_arrays(kappa_a, kappa_b, cos_theta, cfg))


def mls_from_normalizers(
    kappa_a: ArrayLike, kappa_b: ArrayLike, cos_theta: ArrayLike, cfg: SphereConfig
) -> NDArray[np.float64]:
    """log C_d(kappa_a) + log C_d(kappa_b) - log C_d(kappa_tilde) - d log r, term by term."""
    ka = np.asarray(kappa_a, dtype=float)
    kb = np.asarray(kappa_b, dtype=float)
    kt = kappa_tilde_from_cos(ka, kb, cos_theta)
    log_c_t = _log_kappa_pow_over_bessel(cfg.nu, kt) - 0.5 * cfg.d * LOG_2PI
    return (
        np.asarray(log_normalizer(ka, cfg))
        + np.asarray(log_normalizer(kb, cfg))
        - log_c_t
        - cfg.d * math.log(cfg.r)
    )


def sweep_landscape(
    kappa_axis: ArrayLike,
    cos_theta_axis: ArrayLike,
    cfg: SphereConfig,
) -> LandscapeGrid:
    """
    Evaluate the landscape on kappa_axis x kappa_axis x cos_theta_axis.

    Axes are sorted ascending; error locations index the axes as given.
    Cells are independent, so the result does not depend on evaluation order.

    Raises:
        DomainError: an axis is empty or holds an out-of-domain value; the
            error's ``location`` names the axis and index.
    """
    kappas = np.asarray(kappa_axis, dtype=float).ravel()
    cosines = np.asarray(cos_theta_axis, dtype=float).ravel()
    if kappas.size == 0 or cosines.size == 0:
        raise DomainError("landscape axes must be non-empty")
    try:
        _check_positive(kappas, "kappa")
    except DomainError as exc:
        raise exc.at({"kappa_axis": exc.location[0]}, prefix=f"kappa_axis[{exc.location[0]}]: ") from exc
    bad = ~np.isfinite(cosines) | (np.abs(cosines) > 1.0 + COS_TOL)
    if bad.any():
        j = int(np.argmax(bad))
        raise DomainError(
            f"cos_theta_axis[{j}]: cos_theta must lie in [-1, 1], got {cosines[j]}",
            location={"cos_theta_axis": j},
        )
    kappas = np.sort(kappas)
    cosines = np.clip(np.sort(cosines), -1.0, 1.0)

    ki, kj, c = np.meshgrid(kappas, kappas, cosines, indexing="ij")
    values = mls_landscape_arrays(ki, kj, c, cfg)
    logger.info(
        "Swept landscape: %d x %d x %d cells (d=%d, r=%.6g)",
        kappas.size, kappas.size, cosines.size, cfg.d, cfg.r,
    )
    return LandscapeGrid(kappa_axis=kappas, cos_theta_axis=cosines, values=values, cfg=cfg)


def landscape_orderings(
    cfg: SphereConfig,
    kappa_high: float = 50.0,
    kappa_low: float = 1.0,
    kappa_high_disagree: Optional[float] = None,
    cos_agree: float = 0.8,
    cos_disagree: float = 0.2,
    n_random: int = 20,
    seed: int = 0,
) -> OrderingReport:
    """
    Check the qualitative landscape orderings at a pinned (d, r).

    - confident agreement: at ``cos_agree``, s(high, high) > s(high, low) > s(low, low);
    - confident disagreement: at ``cos_disagree``, s(high, high) < s(high, low),
      with ``kappa_high_disagree`` (default ``kappa_high``) as the high value;
    - s strictly increasing in cos(theta) for ``n_random`` random kappa pairs.
    """
    s = lambda ka, kb, c: mls_landscape(ka, kb, c, cfg)  # noqa: E731
    k_dis = kappa_high if kappa_high_disagree is None else kappa_high_disagree
    scores = {
        "agree_high_high": s(kappa_high, kappa_high, cos_agree),
        "agree_high_low": s(kappa_high, kappa_low, cos_agree),
        "agree_low_low": s(kappa_low, kappa_low, cos_agree),
        "disagree_high_high": s(k_dis, k_dis, cos_disagree),
        "disagree_high_low": s(k_dis, kappa_low, cos_disagree),
    }
    agreement = scores["agree_high_high"] > scores["agree_high_low"] > scores["agree_low_low"]
    disagreement = scores["disagree_high_high"] < scores["disagree_high_low"]

    rng = np.random.default_rng(seed)
    pairs = np.exp(rng.uniform(math.log(0.1), math.log(100.0), size=(n_random, 2)))
    cosines = np.linspace(-1.0, 1.0, 41)
    curves = mls_landscape_arrays(pairs[:, 0:1], pairs[:, 1:2], cosines[None, :], cfg)
    increasing = bool(np.all(np.diff(curves, axis=1) > 0))

    return OrderingReport(
        cfg=cfg,
        kappa_high=kappa_high,
        kappa_high_disagree=k_dis,
        kappa_low=kappa_low,
        confident_agreement=bool(agreement),
        confident_disagreement=bool(disagreement),
        increasing_in_cos=increasing,
        scores=scores,
    )
