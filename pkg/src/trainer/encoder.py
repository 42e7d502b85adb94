"""Two-layer tanh encoder with a direction head (mu) and a confidence head (kappa)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import expit

from ..errors import DomainError
from ..vmf import StochasticEmbedding

PARAM_NAMES = ("w1", "b1", "w2", "b2", "w_mu", "b_mu", "w_kappa", "b_kappa")
KAPPA_WEIGHT_SCALE = 0.01


def softplus(x: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.logaddexp(0.0, x)


def softplus_inverse(y: float) -> float:
    """x with softplus(x) = y, for y > 0."""
    return float(y + np.log(-np.expm1(-y)))


@dataclass
class EncoderCache:
    """Activations kept from the forward pass for backpropagation."""

    x: NDArray[np.float64]
    h1: NDArray[np.float64]
    h2: NDArray[np.float64]
    v_norm: NDArray[np.float64]
    mu: NDArray[np.float64]
    kappa_pre: NDArray[np.float64]
    kappa_raw: NDArray[np.float64]


@dataclass
class ToyEncoder:
    """
    x -> tanh(x W1 + b1) -> tanh(. W2 + b2) = h, then
    mu = v / ||v|| with v = h W_mu + b_mu, and
    kappa = clip(softplus(h w_kappa + b_kappa), kappa_min, kappa_max).
    """

    params: Dict[str, NDArray[np.float64]]
    kappa_min: float
    kappa_max: float

    @classmethod
    def initialize(
        cls,
        input_dim: int,
        embed_dim: int,
        hidden_dim: int,
        rng: np.random.Generator,
        kappa_init: float = 10.0,
        kappa_min: float = 1e-2,
        kappa_max: float = 1e4,
    ) -> "ToyEncoder":
        """Scaled-normal weights; the kappa head starts near ``kappa_init`` for every input."""
        def dense(fan_in: int, fan_out: int) -> NDArray[np.float64]:
            return rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)

        params = {
            "w1": dense(input_dim, hidden_dim),
            "b1": np.zeros(hidden_dim),
            "w2": dense(hidden_dim, hidden_dim),
            "b2": np.zeros(hidden_dim),
            "w_mu": dense(hidden_dim, embed_dim),
            "b_mu": np.zeros(embed_dim),
            "w_kappa": KAPPA_WEIGHT_SCALE * rng.standard_normal(hidden_dim) / np.sqrt(hidden_dim),
            "b_kappa": np.array(softplus_inverse(kappa_init)),
        }
        return cls(params=params, kappa_min=kappa_min, kappa_max=kappa_max)

    @property
    def input_dim(self) -> int:
        return int(self.params["w1"].shape[0])

    @property
    def embed_dim(self) -> int:
        return int(self.params["w_mu"].shape[1])

    def copy(self) -> "ToyEncoder":
        return ToyEncoder(
            params={k: v.copy() for k, v in self.params.items()},
            kappa_min=self.kappa_min,
            kappa_max=self.kappa_max,
        )

    def forward_batch(
        self, x: ArrayLike
    ) -> Tuple[NDArray[np.float64], NDArray[np.float64], EncoderCache]:
        """Encode a ``(B, n)`` batch; returns ``(mu (B, d), kappa (B,), cache)``."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise DomainError(f"expected inputs of shape (B, {self.input_dim}), got {x.shape}")
        p = self.params
        h1 = np.tanh(x @ p["w1"] + p["b1"])
        h2 = np.tanh(h1 @ p["w2"] + p["b2"])
        v = h2 @ p["w_mu"] + p["b_mu"]
        v_norm = np.linalg.norm(v, axis=1)
        mu = v / v_norm[:, None]
        kappa_pre = h2 @ p["w_kappa"] + p["b_kappa"]
        kappa_raw = softplus(kappa_pre)
        kappa = np.clip(kappa_raw, self.kappa_min, self.kappa_max)
        cache = EncoderCache(x=x, h1=h1, h2=h2, v_norm=v_norm, mu=mu, kappa_pre=kappa_pre, kappa_raw=kappa_raw)
        return mu, kappa, cache

    def backward(
        self,
        cache: EncoderCache,
        d_mu: NDArray[np.float64],
        d_kappa: NDArray[np.float64],
    ) -> Dict[str, NDArray[np.float64]]:
        """
        Backpropagate output gradients to parameter gradients.

        The normalization uses the exact Jacobian (I - mu mu^T) / ||v||; the
        clamp passes gradients only where softplus lies inside the bounds.
        """
        p = self.params
        mu = cache.mu
        d_v = (d_mu - np.sum(d_mu * mu, axis=1, keepdims=True) * mu) / cache.v_norm[:, None]
        inside = (cache.kappa_raw >= self.kappa_min) & (cache.kappa_raw <= self.kappa_max)
        d_pre = np.where(inside, d_kappa, 0.0) * expit(cache.kappa_pre)

        grads = {
            "w_mu": cache.h2.T @ d_v,
            "b_mu": d_v.sum(axis=0),
            "w_kappa": cache.h2.T @ d_pre,
            "b_kappa": np.array(d_pre.sum()),
        }
        d_h2 = d_v @ p["w_mu"].T + np.outer(d_pre, p["w_kappa"])
        d_z2 = d_h2 * (1.0 - cache.h2 ** 2)
        grads["w2"] = cache.h1.T @ d_z2
        grads["b2"] = d_z2.sum(axis=0)
        d_z1 = (d_z2 @ p["w2"].T) * (1.0 - cache.h1 ** 2)
        grads["w1"] = cache.x.T @ d_z1
        grads["b1"] = d_z1.sum(axis=0)
        return grads

    def apply_update(self, grads: Dict[str, NDArray[np.float64]], lr: float) -> None:
        """Plain SGD step in place."""
        for name in PARAM_NAMES:
            self.params[name] = self.params[name] - lr * grads[name]


def forward(enc: ToyEncoder, x: ArrayLike) -> StochasticEmbedding:
    """Encode a single input vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DomainError(f"expected a single input vector, got shape {x.shape}")
    mu, kappa, _ = enc.forward_batch(x[None, :])
    return StochasticEmbedding(mu=mu[0], kappa=float(kappa[0]))
