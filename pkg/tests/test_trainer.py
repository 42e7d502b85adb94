"""Tests for the toy encoder, the synthetic data, the metrics and the training loop."""
from __future__ import annotations

import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import numpy as np
import pandas as pd
import pytest

from src.checks import encoder_gradient_error
from src.contrastive import SimilarityKind
from src.errors import DomainError
from src.settings import DatasetSpec, TrainConfig
from src.trainer import (
    SyntheticDataset,
    ToyEncoder,
    TrainState,
    alignment_metric,
    batch_objective,
    confidence_report,
    expected_uniformity_on_sphere,
    forward,
    train,
    uniformity_metric,
)
from src.trainer.encoder import softplus, softplus_inverse
from src.trainer.loop import HISTORY_COLUMNS, _streams
from src.vmf import SphereConfig

SMALL_DATA = DatasetSpec(input_dim=6, pool_size=64, eval_size=16)


def small_config(**overrides) -> TrainConfig:
    fields = dict(d=4, hidden_dim=8, negatives=3, batch_size=4, steps=10, lr=0.01, log_every=5, dataset=SMALL_DATA)
    fields.update(overrides)
    return TrainConfig(**fields)


def make_encoder(seed: int = 0, **kwargs) -> ToyEncoder:
    return ToyEncoder.initialize(input_dim=6, embed_dim=4, hidden_dim=8, rng=np.random.default_rng(seed), **kwargs)


def test_softplus_inverse_round_trip():
    for y in [1e-2, 0.5, 10.0, 1e4]:
        assert float(softplus(np.array(softplus_inverse(y)))) == pytest.approx(y, rel=1e-12)


def test_forward_outputs_unit_directions_and_bounded_concentrations():
    enc = make_encoder(kappa_min=0.5, kappa_max=20.0)
    x = np.random.default_rng(1).standard_normal((50, 6)) * 10.0
    mu, kappa, _ = enc.forward_batch(x)
    np.testing.assert_allclose(np.linalg.norm(mu, axis=1), 1.0, atol=1e-12)
    assert np.all((kappa >= 0.5) & (kappa <= 20.0))
    single = forward(enc, x[3])
    np.testing.assert_allclose(single.mu, mu[3], atol=1e-12)
    assert single.kappa == pytest.approx(kappa[3], rel=1e-12)


def test_kappa_head_starts_near_initial_value():
    enc = make_encoder(kappa_init=10.0)
    _, kappa, _ = enc.forward_batch(np.random.default_rng(2).standard_normal((100, 6)))
    assert np.all(np.abs(kappa - 10.0) < 0.5)


def test_forward_is_deterministic_for_a_seed():
    x = np.random.default_rng(3).standard_normal((5, 6))
    mu_a, kappa_a, _ = make_encoder(7).forward_batch(x)
    mu_b, kappa_b, _ = make_encoder(7).forward_batch(x)
    np.testing.assert_array_equal(mu_a, mu_b)
    np.testing.assert_array_equal(kappa_a, kappa_b)


def test_forward_rejects_wrong_input_dimension():
    enc = make_encoder()
    with pytest.raises(DomainError):
        enc.forward_batch(np.zeros((2, 5)))
    with pytest.raises(DomainError):
        forward(enc, np.zeros((1, 6)))


@pytest.mark.parametrize("sim", list(SimilarityKind))
def test_encoder_gradients_match_finite_differences(sim):
    assert encoder_gradient_error(sim, np.random.default_rng(41)) < 1e-4


def test_small_sgd_step_does_not_increase_the_batch_loss():
    rng = np.random.default_rng(5)
    data = SyntheticDataset.generate(SMALL_DATA, rng)
    views = data.contrastive_batch(batch_size=8, negatives=3, rng=rng)
    cfg = SphereConfig(d=4, r=2.0)
    for sim in SimilarityKind:
        enc = make_encoder(6)
        before, grads = batch_objective(enc, views, sim, cfg)
        enc.apply_update(grads, 1e-3)
        after, _ = batch_objective(enc, views, sim, cfg)
        assert after <= before + 1e-6


def test_views_stack_and_split_round_trip():
    rng = np.random.default_rng(8)
    data = SyntheticDataset.generate(SMALL_DATA, rng)
    views = data.contrastive_batch(batch_size=5, negatives=3, rng=rng)
    stacked = views.stacked()
    assert stacked.shape == (5 * (2 + 3), 6)
    anchor, positive, negatives = views.split(stacked)
    np.testing.assert_array_equal(anchor, views.anchor)
    np.testing.assert_array_equal(positive, views.positive)
    np.testing.assert_array_equal(negatives, views.negatives)
    assert views.stacked_high().shape == (25,)


def test_dataset_is_reproducible():
    a = SyntheticDataset.generate(SMALL_DATA, np.random.default_rng(9))
    b = SyntheticDataset.generate(SMALL_DATA, np.random.default_rng(9))
    np.testing.assert_array_equal(a.samples, b.samples)
    np.testing.assert_array_equal(a.labels, b.labels)
    norms = np.linalg.norm(a.centers, axis=1)
    np.testing.assert_allclose(norms, SMALL_DATA.center_scale * math.sqrt(SMALL_DATA.input_dim))


def test_alignment_metric():
    mu = np.eye(4)
    assert alignment_metric(mu, mu) == 0.0
    assert alignment_metric(mu, -mu) == pytest.approx(4.0)
    with pytest.raises(DomainError):
        alignment_metric(mu, mu[:3])


def test_uniformity_metric_extremes():
    same = np.tile(np.array([0.0, 1.0, 0.0]), (10, 1))
    assert uniformity_metric(same) == pytest.approx(0.0, abs=1e-12)
    antipodes = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert uniformity_metric(antipodes) == pytest.approx(-8.0, abs=1e-12)
    with pytest.raises(DomainError):
        uniformity_metric(same[:1])


def test_expected_uniformity_d3_closed_form():
    assert expected_uniformity_on_sphere(3) == pytest.approx(-4.0 + math.log(math.sinh(4.0) / 4.0), abs=1e-12)


def test_uniformity_of_uniform_sample_matches_expectation():
    rng = np.random.default_rng(10)
    u = rng.standard_normal((1000, 8))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    assert uniformity_metric(u) == pytest.approx(expected_uniformity_on_sphere(8), abs=0.05)


def test_zero_steps_records_nothing(tmp_path):
    state = train(small_config(steps=0), seed=1)
    assert state.step == 0
    assert state.history == []
    path = state.write_history_csv(tmp_path / "history.csv")
    assert path.read_bytes() == (",".join(HISTORY_COLUMNS) + "\n").encode("utf-8")


def test_zero_learning_rate_keeps_the_encoder_fixed():
    state = train(small_config(lr=0.0, steps=6, log_every=2), seed=3)
    assert [row["step"] for row in state.history] == [0, 2, 4, 6]
    losses = {row["loss"] for row in state.history}
    assert len(losses) == 1


def test_history_records_log_steps_and_final_step():
    state = train(small_config(steps=12, log_every=5), seed=4)
    assert [row["step"] for row in state.history] == [0, 5, 10, 12]
    frame = state.history_frame()
    assert list(frame.columns) == HISTORY_COLUMNS
    assert np.all(np.isfinite(frame.to_numpy(dtype=float)))


@pytest.mark.parametrize("similarity", ["mls", "inner"])
def test_training_is_reproducible(similarity):
    first = train(small_config(similarity=similarity), seed=11)
    second = train(small_config(similarity=similarity), seed=11)
    pd.testing.assert_frame_equal(first.history_frame(), second.history_frame(), check_exact=True)
    for name, value in first.encoder.params.items():
        np.testing.assert_array_equal(value, second.encoder.params[name])


def test_different_seeds_give_different_runs():
    a = train(small_config(), seed=1)
    b = train(small_config(), seed=2)
    assert a.history[0]["loss"] != b.history[0]["loss"]


def test_cosine_decay_schedule():
    state = train(small_config(steps=8, cosine_decay=True), seed=5)
    assert state.lr == pytest.approx(0.5 * 0.01 * (1.0 + math.cos(math.pi * 7 / 8)))


def test_concentrations_stay_within_bounds_after_training():
    cfg = small_config(steps=30, lr=0.05, kappa_min=1.0, kappa_max=50.0)
    state = train(cfg, seed=6)
    x = state.dataset().samples
    _, kappa, _ = state.encoder.forward_batch(x)
    assert np.all((kappa >= 1.0) & (kappa <= 50.0))


def test_state_save_load_round_trip(tmp_path):
    state = train(small_config(steps=5, log_every=2), seed=12)
    path = state.save(tmp_path / "state.npz")
    loaded = TrainState.load(path)
    assert loaded.step == state.step
    assert loaded.seed == state.seed
    assert loaded.config == state.config
    pd.testing.assert_frame_equal(loaded.history_frame(), state.history_frame(), check_exact=True)
    for name, value in state.encoder.params.items():
        np.testing.assert_array_equal(loaded.encoder.params[name], value)


def test_state_keeps_the_batch_stream_position(tmp_path):
    config = small_config(steps=5, log_every=2)
    state = train(config, seed=12)
    replay = np.random.default_rng(_streams(12)["batches"])
    data = state.dataset()
    for _ in range(config.steps):
        data.contrastive_batch(config.batch_size, config.negatives, replay)
    assert state.batch_rng_state == replay.bit_generator.state

    loaded = TrainState.load(state.save(tmp_path / "state.npz"))
    assert loaded.batch_rng_state == state.batch_rng_state
    np.testing.assert_array_equal(loaded.batch_generator().random(4), replay.random(4))


def test_confidence_report_groups_views_by_noise():
    state = train(small_config(steps=0), seed=13)
    report = confidence_report(state, n_views=512, seed=1)
    assert report.n_low > 0 and report.n_high > 0
    assert report.n_low + report.n_high == 512
    assert abs(report.mean_kappa_low - report.mean_kappa_high) < 0.5
