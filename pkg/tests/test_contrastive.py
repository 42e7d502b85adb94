"""Tests for InfoNCE, its gradients and the temperature/radius equivalence."""
from __future__ import annotations

import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import numpy as np
import pytest

from src.checks import _random_batch, info_nce_gradient_error
from src.contrastive import (
    ContrastiveBatch,
    SimilarityKind,
    contrastive_loss_direct,
    equivalence_check,
    info_nce,
    info_nce_arrays,
    info_nce_grad,
    loss_from_similarities,
    mean_info_nce,
    radius_from_temperature,
    temperature_from_radius,
)
from src.errors import DegenerateGradientError, DomainError
from src.vmf import SphereConfig, StochasticEmbedding

INNER = SimilarityKind.SCALED_INNER_PRODUCT
MLS = SimilarityKind.MLS


def emb(mu, kappa=1.0) -> StochasticEmbedding:
    return StochasticEmbedding.from_direction(mu, kappa)


def test_radius_temperature_examples():
    assert radius_from_temperature(0.25) == 2.0
    assert radius_from_temperature(1.0) == 1.0
    assert radius_from_temperature(0.07) ** 2 == pytest.approx(100.0 / 7.0, rel=1e-14)
    for tau in [1e-3, 0.07, 0.1, 0.5, 3.0, 1e3]:
        assert temperature_from_radius(radius_from_temperature(tau)) == pytest.approx(tau, rel=1e-15)


def test_radius_temperature_reject_nonpositive():
    for bad in [0.0, -1.0, float("inf"), float("nan")]:
        with pytest.raises(DomainError):
            radius_from_temperature(bad)
        with pytest.raises(DomainError):
            temperature_from_radius(bad)


def test_similarity_kind_parsing():
    assert SimilarityKind.parse("inner") is INNER
    assert SimilarityKind.parse("Scaled_Inner_Product") is INNER
    assert SimilarityKind.parse("mls") is MLS
    assert SimilarityKind.parse(MLS) is MLS
    with pytest.raises(DomainError):
        SimilarityKind.parse("cosine")


def test_batch_validation():
    e = np.array([1.0, 0.0, 0.0])
    with pytest.raises(DomainError):
        ContrastiveBatch(anchor=emb(e), positive=emb(e), negatives=())
    with pytest.raises(DomainError):
        ContrastiveBatch(anchor=emb(e), positive=emb(e), negatives=(emb([1.0, 0.0]),))
    batch = ContrastiveBatch(anchor=emb(e), positive=emb(e), negatives=[emb(-e), emb([0.0, 1.0, 0.0])])
    assert isinstance(batch.negatives, tuple)
    assert batch.num_negatives == 2
    assert batch.d == 3


def test_equal_similarities_give_log_of_candidate_count():
    e = np.array([0.0, 1.0, 0.0, 0.0])
    for m in [1, 4, 9]:
        batch = ContrastiveBatch(anchor=emb([1.0, 1.0, 0.0, 0.0]), positive=emb(e), negatives=tuple(emb(e) for _ in range(m)))
        for sim in SimilarityKind:
            value = info_nce(batch, sim, SphereConfig(d=4, r=2.0)).value
            assert value == pytest.approx(math.log(m + 1), abs=1e-12)


def test_loss_saturates_when_positive_dominates():
    e = np.array([1.0, 0.0, 0.0])
    batch = ContrastiveBatch(anchor=emb(e), positive=emb(e), negatives=(emb(-e), emb(-e)))
    cfg = SphereConfig.from_temperature(d=3, tau=0.01)
    loss = info_nce(batch, INNER, cfg)
    assert loss.value < 1e-12
    assert loss.value >= 0.0


def test_two_negative_example_matches_hand_computation():
    tau = 0.5
    anchor = np.array([1.0, 0.0, 0.0])
    positive = np.array([math.cos(0.3), math.sin(0.3), 0.0])
    neg_a = np.array([0.0, 1.0, 0.0])
    neg_b = np.array([math.cos(2.0), 0.0, math.sin(2.0)])
    batch = ContrastiveBatch(anchor=emb(anchor), positive=emb(positive), negatives=(emb(neg_a), emb(neg_b)))

    logits = [math.cos(0.3) / tau, 0.0, math.cos(2.0) / tau]
    expected = -math.log(math.exp(logits[0]) / sum(math.exp(x) for x in logits))

    value = info_nce(batch, INNER, SphereConfig.from_temperature(d=3, tau=tau))
    assert value.value == pytest.approx(expected, abs=1e-12)
    assert contrastive_loss_direct(batch, tau) == pytest.approx(expected, abs=1e-12)
    assert value.softmax_weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert value.value == pytest.approx(-math.log(value.softmax_weights[0]), abs=1e-12)


def test_loss_is_shift_invariant_and_nonnegative():
    s = np.array([[1.5, -2.0, 0.25, 3.0], [40.0, -40.0, 39.0, 0.0]])
    base, _ = loss_from_similarities(s)
    assert np.all(base >= 0.0)
    for shift in [-50.0, 7.5, 300.0]:
        shifted, _ = loss_from_similarities(s + shift)
        np.testing.assert_allclose(shifted, base, atol=1e-12, rtol=0)


def test_raising_a_negative_similarity_never_lowers_the_loss():
    s = np.array([2.0, 0.5, -1.0, 1.0])
    previous = loss_from_similarities(s)[0]
    for bump in np.linspace(0.1, 10.0, 25):
        raised = s.copy()
        raised[2] += bump
        current = loss_from_similarities(raised)[0]
        assert current >= previous
        previous = current


def test_stacked_losses_match_single_batches(rng):
    cfg = SphereConfig(d=8, r=1.5)
    batches = [_random_batch(rng, 8, 3, MLS) for _ in range(5)]
    arrays = [b.as_arrays() for b in batches]
    loss, _, _ = info_nce_arrays(
        np.stack([a[0] for a in arrays]),
        np.array([a[1] for a in arrays]),
        np.stack([a[2] for a in arrays]),
        np.stack([a[3] for a in arrays]),
        MLS,
        cfg,
    )
    singles = [info_nce(b, MLS, cfg).value for b in batches]
    np.testing.assert_allclose(loss, singles, rtol=1e-13, atol=1e-13)
    assert mean_info_nce(batches, MLS, cfg) == pytest.approx(float(np.mean(singles)), abs=1e-12)


def test_batch_dimension_must_match_sphere():
    e = np.array([1.0, 0.0, 0.0])
    batch = ContrastiveBatch(anchor=emb(e), positive=emb(e), negatives=(emb(-e),))
    with pytest.raises(DomainError, match="sphere dimension 4") as info:
        info_nce(batch, MLS, SphereConfig(d=4, r=1.0))
    assert info.value.location is None
    with pytest.raises(DomainError, match="share d"):
        ContrastiveBatch(anchor=emb(e), positive=emb(e), negatives=(emb(np.array([0.0, 1.0])),))
    with pytest.raises(DomainError, match="kappa"):
        StochasticEmbedding(mu=e, kappa=0.0)


@pytest.mark.parametrize("sim", list(SimilarityKind))
def test_gradients_match_finite_differences(sim):
    rng = np.random.default_rng(31 if sim is MLS else 32)
    for d, m in [(3, 1), (8, 4), (16, 6)]:
        batch = _random_batch(rng, d, m, sim)
        assert info_nce_gradient_error(batch, sim, SphereConfig(d=d, r=1.7)) < 1e-5


def test_gradients_are_tangent(rng):
    batch = _random_batch(rng, 8, 3, MLS)
    g = info_nce_grad(batch, MLS, SphereConfig(d=8, r=2.0))
    assert abs(float(g.d_mu_anchor @ batch.anchor.mu)) < 1e-10
    assert abs(float(g.d_mu_positive @ batch.positive.mu)) < 1e-10
    for grad, neg in zip(g.d_mu_negatives, batch.negatives):
        assert abs(float(grad @ neg.mu)) < 1e-10
    assert g.d_mu_negatives.shape == (3, 8)
    assert g.d_kappa_negatives.shape == (3,)


def test_inner_product_gradient_ignores_concentrations(rng):
    batch = _random_batch(rng, 5, 2, INNER)
    g = info_nce_grad(batch, INNER, SphereConfig(d=5, r=1.0))
    assert g.d_kappa_anchor == 0.0
    assert g.d_kappa_positive == 0.0
    np.testing.assert_array_equal(g.d_kappa_negatives, 0.0)


def test_saturated_loss_has_vanishing_gradient():
    e = np.array([1.0, 0.0, 0.0, 0.0])
    batch = ContrastiveBatch(anchor=emb(e), positive=emb(e), negatives=(emb(-e), emb(-e), emb(-e)))
    g = info_nce_grad(batch, INNER, SphereConfig(d=4, r=5.0))
    for part in [g.d_mu_anchor, g.d_mu_positive, g.d_mu_negatives]:
        assert np.max(np.abs(part)) <= 1e-12


def test_antipodal_mls_pair_raises_with_location():
    e = np.array([0.0, 0.0, 1.0])
    batch = ContrastiveBatch(
        anchor=emb(e, 4.0),
        positive=emb([1.0, 0.0, 0.0], 2.0),
        negatives=(emb([0.0, 1.0, 0.0], 2.0), emb(-e, 4.0)),
    )
    with pytest.raises(DegenerateGradientError) as info:
        info_nce_grad(batch, MLS, SphereConfig(d=3, r=1.0))
    assert info.value.location == 2
    assert "negative 1" in str(info.value)


@pytest.mark.parametrize("tau", [0.2, 1.0])
def test_radius_form_equals_temperature_form(tau, rng):
    for _ in range(20):
        batch = _random_batch(rng, int(rng.integers(2, 10)), int(rng.integers(1, 8)), INNER)
        assert equivalence_check(batch, tau) <= 1e-12


def test_radius_form_equals_temperature_form_over_random_temperatures():
    rng = np.random.default_rng(33)
    for _ in range(100):
        tau = float(np.exp(rng.uniform(math.log(0.01), math.log(10.0))))
        batch = _random_batch(rng, 6, 4, INNER)
        assert equivalence_check(batch, tau) <= 1e-12
