"""Training loop, diagnostics history and the confidence report."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from ..contrastive import SimilarityKind, info_nce_arrays, info_nce_grad_arrays
from ..errors import TrainingDivergedError
from ..settings import TrainConfig
from ..vmf import SphereConfig
from .dataset import ContrastiveViews, SyntheticDataset, build_dataset
from .encoder import PARAM_NAMES, ToyEncoder
from .metrics import alignment_metric, uniformity_metric

logger = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 10.0
HISTORY_COLUMNS = ["step", "loss", "alignment", "uniformity", "mean_kappa_low", "mean_kappa_high"]
CONFIDENCE_VIEWS = 4096
Grads = Dict[str, NDArray[np.float64]]


@dataclass(frozen=True)
class ConfidenceReport:
    mean_kappa_low: float
    mean_kappa_high: float
    n_low: int
    n_high: int

    def as_dict(self) -> Dict[str, float]:
        return {
            "mean_kappa_low": self.mean_kappa_low,
            "mean_kappa_high": self.mean_kappa_high,
            "n_low": self.n_low,
            "n_high": self.n_high,
        }


@dataclass
class TrainState:
    encoder: ToyEncoder
    config: TrainConfig
    seed: int
    step: int = 0
    lr: float = 0.0
    history: List[Dict[str, float]] = field(default_factory=list)
    batch_rng_state: Dict[str, Any] = field(default_factory=dict)

    def history_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.history, columns=HISTORY_COLUMNS)

    def write_history_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        frame = self.history_frame()
        frame["step"] = frame["step"].astype("int64")
        frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n", encoding="utf-8")
        return path

    def dataset(self) -> SyntheticDataset:
        """The training data, regenerated from the seed."""
        return build_dataset(self.config.dataset, _streams(self.seed)["data"])

    def batch_generator(self) -> np.random.Generator:
        """The batch stream positioned after the last completed step."""
        rng = np.random.default_rng(_streams(self.seed)["batches"])
        if self.batch_rng_state:
            rng.bit_generator.state = self.batch_rng_state
        return rng

    def save(self, path: Union[str, Path]) -> Path:
        """Parameters, counters, config, history and the batch RNG state in one ``.npz``."""
        path = Path(path)
        arrays = {f"param_{name}": self.encoder.params[name] for name in PARAM_NAMES}
        history = self.history_frame()
        np.savez(
            path,
            step=np.array(self.step),
            lr=np.array(self.lr),
            seed=np.array(self.seed),
            config=np.array(self.config.model_dump_json()),
            batch_rng=np.array(json.dumps(self.batch_rng_state)),
            history=history.to_numpy(dtype=float).reshape(-1, len(HISTORY_COLUMNS)),
            **arrays,
        )
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TrainState":
        with np.load(Path(path), allow_pickle=False) as data:
            config = TrainConfig.model_validate(json.loads(str(data["config"])))
            params = {name: data[f"param_{name}"].copy() for name in PARAM_NAMES}
            history = [dict(zip(HISTORY_COLUMNS, row)) for row in data["history"].tolist()]
            for rec in history:
                rec["step"] = int(rec["step"])
            return cls(
                encoder=ToyEncoder(params=params, kappa_min=config.kappa_min, kappa_max=config.kappa_max),
                config=config,
                seed=int(data["seed"]),
                step=int(data["step"]),
                lr=float(data["lr"]),
                history=history,
                batch_rng_state=json.loads(str(data["batch_rng"])),
            )


def _streams(seed: int) -> Dict[str, np.random.SeedSequence]:
    data, init, batches, evaluation = np.random.SeedSequence(seed).spawn(4)
    return {"data": data, "init": init, "batches": batches, "eval": evaluation}


def _candidates(
    views: ContrastiveViews, mu: NDArray[np.float64], kappa: NDArray[np.float64]
) -> Tuple[NDArray[np.float64], ...]:
    a_mu, p_mu, n_mu = views.split(mu)
    a_k, p_k, n_k = views.split(kappa)
    cand_mu = np.concatenate([p_mu[:, None, :], n_mu], axis=1)
    cand_k = np.concatenate([p_k[:, None], n_k], axis=1)
    return a_mu, a_k, cand_mu, cand_k


def batch_objective(
    encoder: ToyEncoder,
    views: ContrastiveViews,
    sim: SimilarityKind,
    cfg: SphereConfig,
) -> Tuple[float, Grads]:
    """
    Mean InfoNCE loss over the batch and its gradient for every encoder parameter.

    Args:
        encoder: Current encoder.
        views: Anchors, positives and negatives to encode.
        sim: Similarity used inside the loss.
        cfg: Sphere the embeddings live on.

    Returns:
        ``(loss, grads)`` with ``grads`` keyed like ``encoder.params``.
    """
    mu, kappa, cache = encoder.forward_batch(views.stacked())
    a_mu, a_k, cand_mu, cand_k = _candidates(views, mu, kappa)
    loss, d_a_mu, d_a_k, d_c_mu, d_c_k = info_nce_grad_arrays(a_mu, a_k, cand_mu, cand_k, sim, cfg)

    b = views.batch_size
    d_mu = np.concatenate([d_a_mu, d_c_mu[:, 0], d_c_mu[:, 1:].reshape(-1, mu.shape[1])]) / b
    d_kappa = np.concatenate([d_a_k, d_c_k[:, 0], d_c_k[:, 1:].reshape(-1)]) / b
    return float(loss.mean()), encoder.backward(cache, d_mu, d_kappa)


def evaluate(
    encoder: ToyEncoder,
    views: ContrastiveViews,
    sim: SimilarityKind,
    cfg: SphereConfig,
) -> Dict[str, float]:
    """Loss, alignment, uniformity and mean kappa per noise tag on a fixed set of views."""
    mu, kappa, _ = encoder.forward_batch(views.stacked())
    a_mu, a_k, cand_mu, cand_k = _candidates(views, mu, kappa)
    loss, _, _ = info_nce_arrays(a_mu, a_k, cand_mu, cand_k, sim, cfg)
    high = views.stacked_high()
    return {
        "loss": float(loss.mean()),
        "alignment": alignment_metric(a_mu, cand_mu[:, 0]),
        "uniformity": uniformity_metric(a_mu),
        "mean_kappa_low": float(kappa[~high].mean()) if (~high).any() else math.nan,
        "mean_kappa_high": float(kappa[high].mean()) if high.any() else math.nan,
    }


def _learning_rate(config: TrainConfig, step: int) -> float:
    if not config.cosine_decay or config.steps == 0:
        return config.lr
    return 0.5 * config.lr * (1.0 + math.cos(math.pi * (step - 1) / config.steps))


def train(
    config: TrainConfig,
    seed: int,
    on_record: Optional[Callable[[Dict[str, float]], None]] = None,
) -> TrainState:
    """
    Minimize the contrastive loss over the encoder with plain SGD.

    Diagnostics are evaluated on a fixed held-out set of views at step 0,
    every ``log_every`` steps and at the final step; a run with zero steps
    records nothing.

    Raises:
        TrainingDivergedError: a batch loss is non-finite or exceeds 10x the
            initial held-out loss.
    """
    streams = _streams(seed)
    dataset = build_dataset(config.dataset, streams["data"])
    encoder = ToyEncoder.initialize(
        input_dim=config.dataset.input_dim,
        embed_dim=config.d,
        hidden_dim=config.hidden_dim,
        rng=np.random.default_rng(streams["init"]),
        kappa_init=config.kappa_init,
        kappa_min=config.kappa_min,
        kappa_max=config.kappa_max,
    )
    eval_views = dataset.contrastive_batch(
        config.dataset.eval_size, config.negatives, np.random.default_rng(streams["eval"])
    )
    batch_rng = np.random.default_rng(streams["batches"])
    cfg = config.sphere
    sim = config.similarity
    state = TrainState(
        encoder=encoder, config=config, seed=seed, lr=config.lr, batch_rng_state=batch_rng.bit_generator.state
    )

    def record(step: int) -> Dict[str, float]:
        metrics = evaluate(encoder, eval_views, sim, cfg)
        row = {"step": step, **metrics}
        state.history.append(row)
        logger.info(
            "step %d loss=%.6f alignment=%.4f uniformity=%.4f kappa(low/high)=%.3f/%.3f",
            step, metrics["loss"], metrics["alignment"], metrics["uniformity"],
            metrics["mean_kappa_low"], metrics["mean_kappa_high"],
        )
        if on_record is not None:
            on_record(row)
        return metrics

    if config.steps == 0:
        return state

    initial_loss = record(0)["loss"]
    logger.info("Training %s similarity: %d steps, lr=%g, r=%.6g", sim.value, config.steps, config.lr, cfg.r)

    for step in range(1, config.steps + 1):
        views = dataset.contrastive_batch(config.batch_size, config.negatives, batch_rng)
        loss, grads = batch_objective(encoder, views, sim, cfg)
        if not math.isfinite(loss) or loss > DIVERGENCE_FACTOR * initial_loss:
            raise TrainingDivergedError(step, loss, initial_loss)
        state.lr = _learning_rate(config, step)
        encoder.apply_update(grads, state.lr)
        state.step = step
        state.batch_rng_state = batch_rng.bit_generator.state
        if step % config.log_every == 0 or step == config.steps:
            record(step)
    return state


def confidence_report(
    state: TrainState,
    dataset: Optional[SyntheticDataset] = None,
    n_views: int = CONFIDENCE_VIEWS,
    seed: int = 0,
) -> ConfidenceReport:
    """Mean kappa over fresh views grouped by noise tag."""
    dataset = dataset if dataset is not None else state.dataset()
    views, high = dataset.tagged_views(n_views, np.random.default_rng(seed))
    _, kappa, _ = state.encoder.forward_batch(views)
    low = ~high
    return ConfidenceReport(
        mean_kappa_low=float(kappa[low].mean()) if low.any() else math.nan,
        mean_kappa_high=float(kappa[high].mean()) if high.any() else math.nan,
        n_low=int(low.sum()),
        n_high=int(high.sum()),
    )
