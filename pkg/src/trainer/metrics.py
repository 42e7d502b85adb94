"""Alignment and uniformity of unit embeddings."""
from __future__ import annotations

import math

import numpy as np
from numpy.typing import ArrayLike
from scipy.spatial.distance import pdist
from scipy.special import gammaln, logsumexp

from ..errors import DomainError
from ..special_fn import log_bessel_i


def alignment_metric(mu_a: ArrayLike, mu_b: ArrayLike) -> float:
    """Mean squared distance between positive-pair directions; rows of ``mu_a`` and ``mu_b`` pair up."""
    mu_a = np.asarray(mu_a, dtype=float)
    mu_b = np.asarray(mu_b, dtype=float)
    if mu_a.shape != mu_b.shape or mu_a.ndim != 2 or mu_a.shape[0] < 1:
        raise DomainError(f"alignment needs matching (n, d) arrays, got {mu_a.shape} and {mu_b.shape}")
    return float(np.mean(np.sum((mu_a - mu_b) ** 2, axis=1)))


def uniformity_metric(mu: ArrayLike, t: float = 2.0) -> float:
    """log mean_{i<j} exp(-t ||mu_i - mu_j||^2); 0 when all embeddings coincide, lower is more uniform."""
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 2 or mu.shape[0] < 2:
        raise DomainError(f"uniformity needs at least 2 embeddings, got shape {mu.shape}")
    sq = pdist(mu, metric="sqeuclidean")
    return float(logsumexp(-t * sq) - math.log(sq.size))


def expected_uniformity_on_sphere(d: int, t: float = 2.0) -> float:
    """
    log E[exp(-t ||u - v||^2)] for u, v independent and uniform on S^{d-1}.

    With w = u^T v, ||u - v||^2 = 2 - 2w and
    E[exp(k w)] = Gamma(d/2) (2/k)^{d/2-1} I_{d/2-1}(k).
    """
    if d < 2:
        raise DomainError(f"d must be >= 2, got {d}")
    nu = d / 2.0 - 1.0
    k = 2.0 * t
    return -2.0 * t + float(gammaln(d / 2.0)) + nu * math.log(2.0 / k) + float(log_bessel_i(nu, k))
