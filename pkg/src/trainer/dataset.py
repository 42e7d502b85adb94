"""Synthetic clustered data with noise-tagged augmentations."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np
from numpy.typing import NDArray

from ..settings import DatasetSpec


class NoiseTag(str, Enum):
    LOW = "low"
    HIGH = "high"


@dataclass(frozen=True)
class ContrastiveViews:
    """
    Augmented inputs for B anchors.

    ``anchor`` and ``positive`` are two views of the same pool sample;
    ``negatives[b]`` are M views of independently drawn samples. The
    ``*_high`` masks mark views made with the high noise scale.
    """

    anchor: NDArray[np.float64]
    positive: NDArray[np.float64]
    negatives: NDArray[np.float64]
    anchor_high: NDArray[np.bool_]
    positive_high: NDArray[np.bool_]
    negatives_high: NDArray[np.bool_]

    @property
    def batch_size(self) -> int:
        return int(self.anchor.shape[0])

    @property
    def num_negatives(self) -> int:
        return int(self.negatives.shape[1])

    def stacked(self) -> NDArray[np.float64]:
        """All views in one ``(B (2 + M), n)`` array: anchors, positives, then negatives row-major."""
        n = self.anchor.shape[1]
        return np.concatenate([self.anchor, self.positive, self.negatives.reshape(-1, n)], axis=0)

    def stacked_high(self) -> NDArray[np.bool_]:
        return np.concatenate([self.anchor_high, self.positive_high, self.negatives_high.reshape(-1)])

    def split(self, values: NDArray[np.float64]) -> Tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """Inverse of :meth:`stacked` for per-view outputs of shape ``(B (2 + M), ...)``."""
        b, m = self.batch_size, self.num_negatives
        anchor = values[:b]
        positive = values[b:2 * b]
        negatives = values[2 * b:].reshape((b, m) + values.shape[1:])
        return anchor, positive, negatives


@dataclass(frozen=True)
class SyntheticDataset:
    """A fixed pool of samples scattered around K class centers."""

    spec: DatasetSpec
    centers: NDArray[np.float64]
    labels: NDArray[np.int64]
    samples: NDArray[np.float64]

    @classmethod
    def generate(cls, spec: DatasetSpec, rng: np.random.Generator) -> "SyntheticDataset":
        # centers on a sphere of radius center_scale * sqrt(n): well separated for moderate K
        raw = rng.standard_normal((spec.num_centers, spec.input_dim))
        centers = spec.center_scale * np.sqrt(spec.input_dim) * raw / np.linalg.norm(raw, axis=1, keepdims=True)
        labels = rng.integers(0, spec.num_centers, size=spec.pool_size)
        samples = centers[labels] + spec.cluster_std * rng.standard_normal((spec.pool_size, spec.input_dim))
        return cls(spec=spec, centers=centers, labels=labels, samples=samples)

    @property
    def input_dim(self) -> int:
        return self.spec.input_dim

    def augment(self, x: NDArray[np.float64], rng: np.random.Generator) -> Tuple[NDArray[np.float64], NDArray[np.bool_]]:
        """Additive Gaussian noise with a per-view scale drawn from {noise_low, noise_high}."""
        high = rng.random(x.shape[:-1]) < self.spec.high_noise_prob
        scale = np.where(high, self.spec.noise_high, self.spec.noise_low)
        return x + scale[..., None] * rng.standard_normal(x.shape), high

    def contrastive_batch(self, batch_size: int, negatives: int, rng: np.random.Generator) -> ContrastiveViews:
        """Positive pairs from p_pos (two views of one sample), negatives i.i.d. from the pool."""
        idx = rng.integers(0, self.spec.pool_size, size=batch_size)
        neg_idx = rng.integers(0, self.spec.pool_size, size=(batch_size, negatives))
        base = self.samples[idx]
        anchor, anchor_high = self.augment(base, rng)
        positive, positive_high = self.augment(base, rng)
        negs, negs_high = self.augment(self.samples[neg_idx], rng)
        return ContrastiveViews(
            anchor=anchor,
            positive=positive,
            negatives=negs,
            anchor_high=anchor_high,
            positive_high=positive_high,
            negatives_high=negs_high,
        )

    def tagged_views(self, n: int, rng: np.random.Generator) -> Tuple[NDArray[np.float64], NDArray[np.bool_]]:
        """``n`` single views of random pool samples with their high-noise mask."""
        idx = rng.integers(0, self.spec.pool_size, size=n)
        return self.augment(self.samples[idx], rng)


def build_dataset(spec: DatasetSpec, seed_seq: np.random.SeedSequence) -> SyntheticDataset:
    return SyntheticDataset.generate(spec, np.random.default_rng(seed_seq))
