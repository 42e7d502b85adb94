"""Validated run configuration for the sweep, train and check commands."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .config import (
    CHECK_MC_SAMPLES,
    KAPPA_INIT,
    KAPPA_MAX,
    KAPPA_MIN,
    SWEEP_COS_COUNT,
    SWEEP_DIM,
    SWEEP_KAPPA_COUNT,
    SWEEP_KAPPA_MAX,
    SWEEP_KAPPA_MIN,
    SWEEP_TAU,
    TRAIN_BATCH_SIZE,
    TRAIN_LOG_EVERY,
    TRAIN_LR,
    TRAIN_NEGATIVES,
    TRAIN_STEPS,
    TRAIN_TAU,
)
from .contrastive import SimilarityKind, radius_from_temperature
from .vmf import SphereConfig


class _RunModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class _SphereFields(_RunModel):
    """Either ``tau`` or ``r`` fixes the radius; giving both is an error."""

    d: int = Field(ge=2)
    tau: Optional[float] = Field(default=None, gt=0, allow_inf_nan=False)
    r: Optional[float] = Field(default=None, gt=0, allow_inf_nan=False)

    @model_validator(mode="after")
    def _one_radius(self):
        if self.tau is not None and self.r is not None:
            raise ValueError("set either 'tau' or 'r', not both")
        return self

    @property
    def sphere(self) -> SphereConfig:
        if self.r is not None:
            return SphereConfig(d=self.d, r=self.r)
        return SphereConfig(d=self.d, r=radius_from_temperature(self.tau if self.tau is not None else self._default_tau()))

    def _default_tau(self) -> float:
        return TRAIN_TAU


class SweepConfig(_SphereFields):
    """Landscape grid: log-spaced kappa axis (used for both kappa_i and kappa_j) and a linear cos axis."""

    d: int = Field(default=SWEEP_DIM, ge=2)
    kappa_min: float = Field(default=SWEEP_KAPPA_MIN, gt=0)
    kappa_max: float = Field(default=SWEEP_KAPPA_MAX, gt=0)
    kappa_count: int = Field(default=SWEEP_KAPPA_COUNT, ge=1)
    cos_min: float = -1.0
    cos_max: float = 1.0
    cos_count: int = Field(default=SWEEP_COS_COUNT, ge=1)
    orderings_kappa_high: float = Field(default=50.0, gt=0)
    orderings_kappa_high_disagree: float = Field(default=500.0, gt=0)

    def _default_tau(self) -> float:
        return SWEEP_TAU

    @model_validator(mode="after")
    def _ordered_axes(self):
        if self.kappa_max < self.kappa_min:
            raise ValueError(f"kappa_max ({self.kappa_max}) < kappa_min ({self.kappa_min})")
        if self.cos_max < self.cos_min:
            raise ValueError(f"cos_max ({self.cos_max}) < cos_min ({self.cos_min})")
        return self

    def kappa_axis(self) -> np.ndarray:
        return np.logspace(math.log10(self.kappa_min), math.log10(self.kappa_max), self.kappa_count)

    def cos_theta_axis(self) -> np.ndarray:
        return np.linspace(self.cos_min, self.cos_max, self.cos_count)


class DatasetSpec(_RunModel):
    """Gaussian clusters around well-separated centers, augmented by additive noise."""

    num_centers: int = Field(default=4, ge=2)
    input_dim: int = Field(default=16, ge=1)
    pool_size: int = Field(default=1024, ge=2)
    center_scale: float = Field(default=3.0, gt=0)
    cluster_std: float = Field(default=0.5, ge=0)
    noise_low: float = Field(default=0.2, ge=0)
    noise_high: float = Field(default=2.0, ge=0)
    high_noise_prob: float = Field(default=0.5, ge=0, le=1)
    eval_size: int = Field(default=256, ge=2)


class TrainConfig(_SphereFields):
    d: int = Field(default=8, ge=2)
    hidden_dim: int = Field(default=64, ge=1)
    negatives: int = Field(default=TRAIN_NEGATIVES, ge=1)
    batch_size: int = Field(default=TRAIN_BATCH_SIZE, ge=1)
    steps: int = Field(default=TRAIN_STEPS, ge=0)
    lr: float = Field(default=TRAIN_LR, ge=0)
    cosine_decay: bool = False
    similarity: SimilarityKind = SimilarityKind.MLS
    log_every: int = Field(default=TRAIN_LOG_EVERY, ge=1)
    kappa_min: float = Field(default=KAPPA_MIN, gt=0)
    kappa_max: float = Field(default=KAPPA_MAX, gt=0)
    kappa_init: float = Field(default=KAPPA_INIT, gt=0)
    dataset: DatasetSpec = Field(default_factory=DatasetSpec)

    @field_validator("similarity", mode="before")
    @classmethod
    def _parse_similarity(cls, value: Any) -> SimilarityKind:
        return SimilarityKind.parse(value)

    @model_validator(mode="after")
    def _kappa_range(self):
        if not (self.kappa_min <= self.kappa_init <= self.kappa_max):
            raise ValueError(
                f"kappa_init ({self.kappa_init}) must lie in [kappa_min, kappa_max] = [{self.kappa_min}, {self.kappa_max}]"
            )
        return self


ALL_SUITES = (
    "bessel_recurrence",
    "normalizer_identity",
    "mls_vs_monte_carlo",
    "mls_grad",
    "info_nce_grad_mls",
    "info_nce_grad_inner",
    "temperature_equivalence",
    "landscape_orderings",
    "encoder_gradient",
)


class CheckConfig(_RunModel):
    """Instance counts and tolerances of the verification suites."""

    suites: List[str] = Field(default_factory=lambda: list(ALL_SUITES))
    bessel_points: int = Field(default=200, ge=1)
    identity_points: int = Field(default=10_000, ge=1)
    mc_instances: int = Field(default=50, ge=1)
    mc_samples: int = Field(default=CHECK_MC_SAMPLES, ge=1000)
    mc_dims: List[int] = Field(default_factory=lambda: [3, 5, 8])
    mc_sigmas: float = Field(default=3.0, gt=0)
    mc_family_wise: bool = False
    mls_grad_instances: int = Field(default=1000, ge=1)
    mls_grad_dims: List[int] = Field(default_factory=lambda: [3, 16, 128])
    info_nce_grad_instances: int = Field(default=500, ge=1)
    equivalence_batches: int = Field(default=100, ge=1)
    grad_rtol: float = Field(default=1e-5, gt=0)
    encoder_grad_rtol: float = Field(default=1e-4, gt=0)
    orderings_d: int = Field(default=128, ge=2)
    orderings_r: float = Field(default=math.sqrt(10.0), gt=0)
    orderings_kappa_high: float = Field(default=50.0, gt=0)
    orderings_kappa_high_disagree: float = Field(default=500.0, gt=0)

    @field_validator("suites")
    @classmethod
    def _known_suites(cls, value: List[str]) -> List[str]:
        unknown = [s for s in value if s not in ALL_SUITES]
        if unknown:
            raise ValueError(f"unknown check suites {unknown}; choose from {list(ALL_SUITES)}")
        return value

    @field_validator("mc_dims", "mls_grad_dims")
    @classmethod
    def _dims(cls, value: List[int]) -> List[int]:
        if not value or any(d < 2 for d in value):
            raise ValueError("dimension lists must be non-empty with every d >= 2")
        return value


COMMAND_MODELS = {"sweep": SweepConfig, "train": TrainConfig, "check": CheckConfig}


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: Dict[str, Any], overrides: List[str]) -> Dict[str, Any]:
    """
    Apply ``key=value`` overrides to a raw config dict.

    Dotted keys address nested models (``dataset.noise_high=3``). Values are
    parsed as JSON, falling back to the raw string (``similarity=inner``).

    Raises:
        ValueError: an override without ``=`` or with an empty key.
    """
    out = json.loads(json.dumps(data))
    for item in overrides:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ValueError(f"override '{item}' is not of the form key=value")
        target = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = target.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValueError(f"override '{item}': '{part}' is not a section")
            target = node
        target[parts[-1]] = _parse_value(raw.strip())
    return out


def load_raw_config(path: Optional[Path]) -> Tuple[Dict[str, Any], Optional[int]]:
    """
    Read a JSON config file; a run manifest is accepted as well.

    Returns:
        ``(config dict, seed)``; the seed is taken from a manifest and is
        ``None`` for a plain config file.
    """
    if path is None:
        return {}, None
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    if "config" in data and "subcommand" in data:
        return dict(data["config"]), data.get("seed")
    return data, None


def build_config(command: str, data: Dict[str, Any]) -> _RunModel:
    """Validate a raw dict into the command's config model (raises pydantic.ValidationError)."""
    return COMMAND_MODELS[command].model_validate(data)
