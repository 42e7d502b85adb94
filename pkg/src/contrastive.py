"""Contrastive objectives: InfoNCE with a pluggable similarity, and the temperature-radius link."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from .errors import DegenerateGradientError, DomainError
from .mls import mls_grad_arrays, mls_score_arrays, tangent_projection
from .vmf import SphereConfig, StochasticEmbedding

logger = logging.getLogger(__name__)


class SimilarityKind(str, Enum):
    """Similarity between two features on the r-sphere."""

    SCALED_INNER_PRODUCT = "scaled_inner_product"
    MLS = "mls"

    @classmethod
    def parse(cls, value: "str | SimilarityKind") -> "SimilarityKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"inner": cls.SCALED_INNER_PRODUCT, "inner_product": cls.SCALED_INNER_PRODUCT}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            choices = ", ".join(["inner", *(k.value for k in cls)])
            raise DomainError(f"unknown similarity '{value}' (expected one of: {choices})") from None


@dataclass(frozen=True)
class ContrastiveBatch:
    """One anchor view, its positive view and M >= 1 negatives."""

    anchor: StochasticEmbedding
    positive: StochasticEmbedding
    negatives: Tuple[StochasticEmbedding, ...]

    def __post_init__(self) -> None:
        negatives = tuple(self.negatives)
        if len(negatives) < 1:
            raise DomainError("a contrastive batch needs at least one negative")
        dims = {self.anchor.d, self.positive.d, *(n.d for n in negatives)}
        if len(dims) != 1:
            raise DomainError(f"all embeddings in a batch must share d, got {sorted(dims)}")
        object.__setattr__(self, "negatives", negatives)

    @property
    def d(self) -> int:
        return self.anchor.d

    @property
    def num_negatives(self) -> int:
        return len(self.negatives)

    def as_arrays(self) -> Tuple[NDArray[np.float64], float, NDArray[np.float64], NDArray[np.float64]]:
        """``(anchor_mu, anchor_kappa, candidate_mu, candidate_kappa)``; candidate 0 is the positive."""
        candidates = (self.positive, *self.negatives)
        return (
            self.anchor.mu,
            self.anchor.kappa,
            np.stack([c.mu for c in candidates]),
            np.array([c.kappa for c in candidates]),
        )


@dataclass(frozen=True)
class LossValue:
    value: float
    per_similarity: NDArray[np.float64]
    softmax_weights: NDArray[np.float64]


@dataclass(frozen=True)
class BatchGradients:
    """Loss gradients for every embedding of a batch; mu components are tangent vectors."""

    d_mu_anchor: NDArray[np.float64]
    d_kappa_anchor: float
    d_mu_positive: NDArray[np.float64]
    d_kappa_positive: float
    d_mu_negatives: NDArray[np.float64]
    d_kappa_negatives: NDArray[np.float64]


def radius_from_temperature(tau: float) -> float:
    """r = sqrt(1 / tau)."""
    tau = float(tau)
    if not (math.isfinite(tau) and tau > 0):
        raise DomainError(f"temperature must be positive and finite, got {tau}")
    return math.sqrt(1.0 / tau)


def temperature_from_radius(r: float) -> float:
    """tau = 1 / r^2."""
    r = float(r)
    if not (math.isfinite(r) and r > 0):
        raise DomainError(f"radius must be positive and finite, got {r}")
    return 1.0 / (r * r)


def similarity_arrays(
    anchor_mu: ArrayLike,
    anchor_kappa: ArrayLike,
    cand_mu: ArrayLike,
    cand_kappa: ArrayLike,
    sim: SimilarityKind,
    cfg: SphereConfig,
) -> NDArray[np.float64]:
    """
    Similarities of each anchor against its candidates.

    Args:
        anchor_mu: ``(..., d)`` anchor directions.
        anchor_kappa: ``(...)`` anchor concentrations (ignored by the inner product).
        cand_mu: ``(..., K, d)`` candidate directions, positive first.
        cand_kappa: ``(..., K)`` candidate concentrations.

    Returns:
        ``(..., K)`` array of similarities.
    """
    anchor_mu = np.asarray(anchor_mu, dtype=float)
    cand_mu = np.asarray(cand_mu, dtype=float)
    if sim is SimilarityKind.SCALED_INNER_PRODUCT:
        return (cfg.r * cfg.r) * np.sum(cand_mu * anchor_mu[..., None, :], axis=-1)
    return mls_score_arrays(
        cand_mu,
        cand_kappa,
        anchor_mu[..., None, :],
        np.asarray(anchor_kappa, dtype=float)[..., None],
        cfg,
    )


def similarity_grad_arrays(
    anchor_mu: ArrayLike,
    anchor_kappa: ArrayLike,
    cand_mu: ArrayLike,
    cand_kappa: ArrayLike,
    sim: SimilarityKind,
    cfg: SphereConfig,
) -> Tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """Per-pair gradients ``(d_anchor_mu, d_anchor_kappa, d_cand_mu, d_cand_kappa)``, shapes ``(..., K[, d])``."""
    anchor_mu = np.asarray(anchor_mu, dtype=float)
    cand_mu = np.asarray(cand_mu, dtype=float)
    if sim is SimilarityKind.SCALED_INNER_PRODUCT:
        r2 = cfg.r * cfg.r
        a = np.broadcast_to(anchor_mu[..., None, :], cand_mu.shape)
        d_anchor_mu = tangent_projection(r2 * cand_mu, a)
        d_cand_mu = tangent_projection(r2 * a, cand_mu)
        zeros = np.zeros(cand_mu.shape[:-1])
        return d_anchor_mu, zeros, d_cand_mu, zeros.copy()
    d_cand_mu, d_anchor_mu, d_cand_kappa, d_anchor_kappa = mls_grad_arrays(
        cand_mu,
        cand_kappa,
        anchor_mu[..., None, :],
        np.asarray(anchor_kappa, dtype=float)[..., None],
        cfg,
    )
    return d_anchor_mu, d_anchor_kappa, d_cand_mu, d_cand_kappa


def loss_from_similarities(similarities: ArrayLike) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Cross-entropy with the positive at index 0, via max-shifted log-sum-exp.

    Returns ``(loss, weights)`` with shapes ``(...)`` and ``(..., K)``.
    """
    s = np.asarray(similarities, dtype=float)
    lse = logsumexp(s, axis=-1)
    loss = np.maximum(lse - s[..., 0], 0.0)
    weights = np.exp(s - lse[..., None])
    return loss, weights


def info_nce_arrays(
    anchor_mu: ArrayLike,
    anchor_kappa: ArrayLike,
    cand_mu: ArrayLike,
    cand_kappa: ArrayLike,
    sim: SimilarityKind,
    cfg: SphereConfig,
) -> Tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """Per-anchor losses for stacked batches: ``(loss, similarities, weights)``."""
    s = similarity_arrays(anchor_mu, anchor_kappa, cand_mu, cand_kappa, sim, cfg)
    loss, weights = loss_from_similarities(s)
    return loss, s, weights


def info_nce_grad_arrays(
    anchor_mu: ArrayLike,
    anchor_kappa: ArrayLike,
    cand_mu: ArrayLike,
    cand_kappa: ArrayLike,
    sim: SimilarityKind,
    cfg: SphereConfig,
) -> Tuple[NDArray[np.float64], ...]:
    """
    Per-anchor losses and their gradients for stacked batches.

    dL/ds_k = w_k - [k == 0] is chained through the per-pair similarity
    gradients. Gradients are not averaged over anchors.

    Returns:
        ``(loss, d_anchor_mu, d_anchor_kappa, d_cand_mu, d_cand_kappa)``.
    """
    loss, _, weights = info_nce_arrays(anchor_mu, anchor_kappa, cand_mu, cand_kappa, sim, cfg)
    g = weights.copy()
    g[..., 0] -= 1.0
    p_anchor_mu, p_anchor_kappa, p_cand_mu, p_cand_kappa = similarity_grad_arrays(
        anchor_mu, anchor_kappa, cand_mu, cand_kappa, sim, cfg
    )
    d_anchor_mu = np.sum(g[..., None] * p_anchor_mu, axis=-2)
    d_anchor_kappa = np.sum(g * p_anchor_kappa, axis=-1)
    d_cand_mu = g[..., None] * p_cand_mu
    d_cand_kappa = g * p_cand_kappa
    return loss, d_anchor_mu, d_anchor_kappa, d_cand_mu, d_cand_kappa


def _pair_label(k: int) -> str:
    return "positive" if k == 0 else f"negative {k - 1}"


def info_nce(batch: ContrastiveBatch, sim: SimilarityKind, cfg: SphereConfig) -> LossValue:
    """
    InfoNCE loss of one batch: the anchor is scored against the positive
    and each negative, then a log-sum-exp cross-entropy is taken.

    Raises:
        DomainError: MLS similarity on a batch whose dimension is not ``cfg.d``.
    """
    sim = SimilarityKind.parse(sim)
    anchor_mu, anchor_kappa, cand_mu, cand_kappa = batch.as_arrays()
    loss, s, weights = info_nce_arrays(anchor_mu, anchor_kappa, cand_mu, cand_kappa, sim, cfg)
    return LossValue(value=float(loss), per_similarity=s, softmax_weights=weights)


def info_nce_grad(batch: ContrastiveBatch, sim: SimilarityKind, cfg: SphereConfig) -> BatchGradients:
    """
    Gradients of :func:`info_nce` with respect to every mu and kappa of the batch.

    Raises:
        DegenerateGradientError: a pair is antipodal with equal concentrations
            (MLS similarity only); ``location`` is the candidate index.
    """
    sim = SimilarityKind.parse(sim)
    anchor_mu, anchor_kappa, cand_mu, cand_kappa = batch.as_arrays()
    try:
        _, d_anchor_mu, d_anchor_kappa, d_cand_mu, d_cand_kappa = info_nce_grad_arrays(
            anchor_mu, anchor_kappa, cand_mu, cand_kappa, sim, cfg
        )
    except DegenerateGradientError as exc:
        k = exc.location[0] if isinstance(exc.location, tuple) and exc.location else None
        raise DegenerateGradientError(f"{_pair_label(k)} pair: {exc}" if k is not None else str(exc), location=k) from exc
    return BatchGradients(
        d_mu_anchor=d_anchor_mu,
        d_kappa_anchor=float(d_anchor_kappa),
        d_mu_positive=d_cand_mu[0],
        d_kappa_positive=float(d_cand_kappa[0]),
        d_mu_negatives=d_cand_mu[1:],
        d_kappa_negatives=np.asarray(d_cand_kappa[1:]),
    )


def contrastive_loss_direct(batch: ContrastiveBatch, tau: float) -> float:
    """
    The temperature form written out literally:
    -log(exp(f_i.f_j / tau) / (exp(f_i.f_j / tau) + sum_m exp(f_m.f_j / tau))).

    Exponentials are taken without shifting, so keep ``1/tau`` below ~700.
    """
    if not (math.isfinite(tau) and tau > 0):
        raise DomainError(f"temperature must be positive and finite, got {tau}")
    anchor = batch.anchor.mu
    numerator = math.exp(float(batch.positive.mu @ anchor) / tau)
    denominator = numerator + sum(math.exp(float(n.mu @ anchor) / tau) for n in batch.negatives)
    return -math.log(numerator / denominator)


def equivalence_check(batch: ContrastiveBatch, tau: float) -> float:
    """|InfoNCE with r^2 mu_i.mu_j at r = sqrt(1/tau) - the literal temperature form|."""
    cfg = SphereConfig(d=batch.d, r=radius_from_temperature(tau))
    generalized = info_nce(batch, SimilarityKind.SCALED_INNER_PRODUCT, cfg).value
    return abs(generalized - contrastive_loss_direct(batch, tau))


def mean_info_nce(
    batches: Sequence[ContrastiveBatch], sim: SimilarityKind, cfg: SphereConfig
) -> float:
    """Empirical expectation of the loss over a list of batches."""
    if not batches:
        raise DomainError("need at least one batch")
    return float(np.mean([info_nce(b, sim, cfg).value for b in batches]))
