"""MLFlow experiment tracking for landscape sweeps, training runs, and verification checks."""
from __future__ import annotations

import os
from typing import Any, Iterable

import mlflow

from .config import MLFLOW_EXPERIMENT

EXPERIMENT_NAME = MLFLOW_EXPERIMENT


def _tracking_enabled() -> bool:
    """Sweep, train and check runs are tracked unless ``MLFLOW_DISABLED`` is set to true, 1 or yes."""
    return os.getenv("MLFLOW_DISABLED", "").strip().lower() not in {"true", "1", "yes"}


def _use_experiment() -> str:
    """
    Make ``MLFLOW_EXPERIMENT`` (default ``probabilistic-contrastive``) the active
    experiment, creating it on the first run. Returns its id.
    """
    return mlflow.set_experiment(EXPERIMENT_NAME).experiment_id


def _log_config(config: dict[str, Any], prefix: str = "") -> None:
    for key, value in config.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            _log_config(value, prefix=f"{name}.")
        else:
            mlflow.log_param(name, value)


def log_training_run(
    config: dict[str, Any],
    seed: int,
    history: Iterable[dict[str, float]],
    confidence: dict[str, float] | None = None,
    artifact_paths: Iterable[str] = (),
) -> None:
    """Log a training run: config as params, the diagnostics history as step metrics."""
    if not _tracking_enabled():
        return
    try:
        _use_experiment()
        with mlflow.start_run(run_name="train"):
            mlflow.log_param("run_type", "train")
            mlflow.log_param("seed", seed)
            _log_config(config)
            for row in history:
                step = int(row["step"])
                for key, value in row.items():
                    if key != "step":
                        mlflow.log_metric(key, float(value), step=step)
            if confidence:
                for key, value in confidence.items():
                    mlflow.log_metric(f"confidence_{key}", float(value))
            for path in artifact_paths:
                mlflow.log_artifact(path)
    except Exception:
        pass


def log_sweep_run(
    config: dict[str, Any],
    grid_shape: tuple[int, ...],
    orderings: dict[str, bool] | None = None,
    csv_path: str | None = None,
) -> None:
    """Log a landscape sweep."""
    if not _tracking_enabled():
        return
    try:
        _use_experiment()
        with mlflow.start_run(run_name="sweep"):
            mlflow.log_param("run_type", "sweep")
            _log_config(config)
            mlflow.log_param("grid_shape", "x".join(str(n) for n in grid_shape))
            for key, value in (orderings or {}).items():
                mlflow.log_metric(key, 1 if value else 0)
            if csv_path is not None:
                mlflow.log_artifact(csv_path)
    except Exception:
        pass


def log_check_run(
    seed: int,
    results: Iterable[dict[str, Any]],
) -> None:
    """Log verification results, one metric pair per suite."""
    if not _tracking_enabled():
        return
    try:
        _use_experiment()
        with mlflow.start_run(run_name="check"):
            mlflow.log_param("run_type", "check")
            mlflow.log_param("seed", seed)
            all_passed = True
            for row in results:
                mlflow.log_metric(f"{row['check']}_max_err", float(row["max_err"]))
                mlflow.log_metric(f"{row['check']}_pass", 1 if row["pass"] else 0)
                all_passed = all_passed and bool(row["pass"])
            mlflow.log_metric("all_passed", 1 if all_passed else 0)
    except Exception:
        pass
