"""Toy encoder training with the contrastive loss on synthetic data."""
from .dataset import ContrastiveViews, NoiseTag, SyntheticDataset, build_dataset
from .encoder import ToyEncoder, forward
from .loop import TrainState, batch_objective, confidence_report, evaluate, train
from .metrics import alignment_metric, expected_uniformity_on_sphere, uniformity_metric

__all__ = [
    "ContrastiveViews",
    "NoiseTag",
    "SyntheticDataset",
    "ToyEncoder",
    "TrainState",
    "alignment_metric",
    "batch_objective",
    "build_dataset",
    "confidence_report",
    "evaluate",
    "expected_uniformity_on_sphere",
    "forward",
    "train",
    "uniformity_metric",
]
