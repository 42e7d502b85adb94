"""
Verification suites behind ``cli.py check``.

Each suite draws its randomized instances from its own seeded stream, so
running a subset of suites gives the same numbers as a full run.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from scipy.stats import norm

from .contrastive import (
    ContrastiveBatch,
    SimilarityKind,
    equivalence_check,
    info_nce_arrays,
    info_nce_grad,
)
from .gradcheck import KAPPA_REL_STEP, MU_STEP, central_differences, parameter_differences, relative_error
from .mls import (
    MlsInputs,
    landscape_orderings,
    kappa_tilde_from_cos,
    mls_from_normalizers,
    mls_grad_arrays,
    mls_landscape_arrays,
    mls_score,
    mls_score_arrays,
)
from .settings import ALL_SUITES, CheckConfig, DatasetSpec
from .special_fn import log_bessel_i_scaled_limit
from .trainer.dataset import SyntheticDataset
from .trainer.encoder import PARAM_NAMES, ToyEncoder
from .trainer.loop import batch_objective
from .vmf import SphereConfig, StochasticEmbedding, mc_mls_oracle

logger = logging.getLogger(__name__)

BESSEL_TOL = 1e-10
IDENTITY_TOL = 1e-10
EQUIVALENCE_TOL = 1e-12
IDENTITY_RADII = (0.1, 0.5, 1.0, math.sqrt(10.0), 10.0)
MIN_RESULTANT_FRACTION = 0.05
REPORT_COLUMNS = ["check", "instances", "max_err", "threshold", "pass"]


@dataclass
class CheckResult:
    check: str
    instances: int
    max_err: float
    threshold: float
    passed: bool
    failing_inputs: Optional[Dict[str, Any]] = field(default=None)


class _Tracker:
    """Running max error plus the first instance over threshold."""

    def __init__(self, name: str, threshold: float) -> None:
        self.name = name
        self.threshold = threshold
        self.instances = 0
        self.max_err = 0.0
        self.failing: Optional[Dict[str, Any]] = None

    def add(self, err: float, inputs: Callable[[], Dict[str, Any]]) -> None:
        self.instances += 1
        if not math.isfinite(err):
            err = math.inf
        self.max_err = max(self.max_err, err)
        if err > self.threshold and self.failing is None:
            self.failing = {"instance": self.instances - 1, "err": err, **inputs()}

    def result(self) -> CheckResult:
        return CheckResult(
            check=self.name,
            instances=self.instances,
            max_err=self.max_err,
            threshold=self.threshold,
            passed=self.failing is None,
            failing_inputs=self.failing,
        )


def _log_uniform(rng: np.random.Generator, low: float, high: float, size=None):
    return np.exp(rng.uniform(math.log(low), math.log(high), size=size))


def _unit(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def _pair_with_cos(rng: np.random.Generator, d: int, cos_theta: float):
    """Two unit vectors with the given inner product, in a random orientation."""
    a = _unit(rng, d)
    w = rng.standard_normal(d)
    w -= (w @ a) * a
    w /= np.linalg.norm(w)
    b = cos_theta * a + math.sqrt(max(0.0, 1.0 - cos_theta * cos_theta)) * w
    return a, b / np.linalg.norm(b)


def check_bessel_recurrence(cfg: CheckConfig, rng: np.random.Generator) -> CheckResult:
    """I_{nu-1} - I_{nu+1} = (2 nu / kappa) I_nu, across regime boundaries."""
    tracker = _Tracker("bessel_recurrence", BESSEL_TOL)
    nus = _log_uniform(rng, 1.0, 1024.0, cfg.bessel_points)
    kappas = _log_uniform(rng, 1e-3, 1e6, cfg.bessel_points)
    for nu, kappa in zip(nus, kappas):
        lo = log_bessel_i_scaled_limit(nu - 1.0, kappa)
        mid = log_bessel_i_scaled_limit(nu, kappa)
        hi = log_bessel_i_scaled_limit(nu + 1.0, kappa)
        total = math.exp(hi - lo) + (2.0 * nu / kappa) * math.exp(mid - lo)
        tracker.add(abs(total - 1.0), lambda: {"nu": float(nu), "kappa": float(kappa)})
    return tracker.result()


def check_normalizer_identity(cfg: CheckConfig, rng: np.random.Generator) -> CheckResult:
    """The normalizer form and the closed form of the score agree term for term."""
    tracker = _Tracker("normalizer_identity", IDENTITY_TOL)
    n = cfg.identity_points
    dims = rng.choice([2, 3, 4, 5, 8, 16, 64, 128, 512], size=n)
    radii = rng.choice(IDENTITY_RADII, size=n)
    ka = _log_uniform(rng, 1e-3, 1e4, n)
    kb = _log_uniform(rng, 1e-3, 1e4, n)
    cos_theta = rng.uniform(-1.0, 1.0, n)
    errors = np.empty(n)
    for d in np.unique(dims):
        for r in np.unique(radii[dims == d]):
            sel = (dims == d) & (radii == r)
            sphere = SphereConfig(d=int(d), r=float(r))
            closed = mls_landscape_arrays(ka[sel], kb[sel], cos_theta[sel], sphere)
            via_normalizers = mls_from_normalizers(ka[sel], kb[sel], cos_theta[sel], sphere)
            errors[sel] = np.abs(closed - via_normalizers) / np.maximum(1.0, np.abs(closed))
    for i in range(n):
        tracker.add(
            float(errors[i]),
            lambda: {
                "d": int(dims[i]), "r": float(radii[i]),
                "kappa_a": float(ka[i]), "kappa_b": float(kb[i]), "cos_theta": float(cos_theta[i]),
            },
        )
    return tracker.result()


def mc_threshold(sigmas: float, instances: int, family_wise: bool = False) -> float:
    """
    z bound per instance. Plain ``sigmas`` by default; with ``family_wise`` the
    Sidak-corrected bound giving all ``instances`` together the false-alarm
    rate of a single ``sigmas`` test.
    """
    if not family_wise:
        return float(sigmas)
    alpha = 2.0 * norm.sf(sigmas)
    per_instance = 1.0 - (1.0 - alpha) ** (1.0 / instances)
    return float(norm.isf(per_instance / 2.0))


def check_mls_vs_monte_carlo(cfg: CheckConfig, rng: np.random.Generator) -> CheckResult:
    """Closed-form score against the importance-sampling estimate, in standard errors."""
    tracker = _Tracker("mls_vs_monte_carlo", mc_threshold(cfg.mc_sigmas, cfg.mc_instances, cfg.mc_family_wise))
    for i in range(cfg.mc_instances):
        d = int(cfg.mc_dims[i % len(cfg.mc_dims)])
        r = float(rng.uniform(0.5, 3.0))
        ka, kb = (float(k) for k in _log_uniform(rng, 0.5, 20.0, 2))
        mu_a, mu_b = _pair_with_cos(rng, d, float(rng.uniform(-1.0, 1.0)))
        seed = int(rng.integers(0, 2**31 - 1))
        sphere = SphereConfig(d=d, r=r)
        a = StochasticEmbedding(mu=mu_a, kappa=ka)
        b = StochasticEmbedding(mu=mu_b, kappa=kb)
        closed = mls_score(MlsInputs(a=a, b=b, cfg=sphere))
        mc = mc_mls_oracle(a, b, sphere, cfg.mc_samples, seed)
        z = abs(closed - mc.estimate) / mc.standard_error
        tracker.add(
            z,
            lambda: {
                "d": d, "r": r, "mu_a": mu_a.tolist(), "kappa_a": ka, "mu_b": mu_b.tolist(), "kappa_b": kb,
                "n": cfg.mc_samples, "rng_seed": seed, "closed_form": closed,
                "estimate": mc.estimate, "standard_error": mc.standard_error,
            },
        )
    return tracker.result()


def _draw_mls_pair(rng: np.random.Generator, d: int):
    """Random pair away from the antipodal singularity."""
    while True:
        ka, kb = (float(k) for k in _log_uniform(rng, 0.1, 1e3, 2))
        c = float(rng.uniform(-1.0, 1.0))
        if kappa_tilde_from_cos(ka, kb, c) >= MIN_RESULTANT_FRACTION * (ka + kb):
            mu_a, mu_b = _pair_with_cos(rng, d, c)
            return mu_a, ka, mu_b, kb


def mls_gradient_error(mu_a, ka, mu_b, kb, sphere: SphereConfig) -> float:
    """Relative error of the analytic MLS gradient against central differences."""
    d = sphere.d
    x = np.concatenate([mu_a, mu_b, [ka, kb]])
    steps = np.concatenate([np.full(2 * d, MU_STEP), KAPPA_REL_STEP * np.maximum([ka, kb], 1.0)])

    def score(points: np.ndarray) -> np.ndarray:
        return mls_score_arrays(points[:, :d], points[:, 2 * d], points[:, d:2 * d], points[:, 2 * d + 1], sphere)

    numeric = central_differences(score, x, steps, unit_blocks=(slice(0, d), slice(d, 2 * d)))
    g_mu_a, g_mu_b, g_ka, g_kb = mls_grad_arrays(mu_a, ka, mu_b, kb, sphere)
    analytic = np.concatenate([g_mu_a, g_mu_b, [g_ka, g_kb]])
    return relative_error(analytic, numeric)


def check_mls_grad(cfg: CheckConfig, rng: np.random.Generator) -> CheckResult:
    tracker = _Tracker("mls_grad", cfg.grad_rtol)
    for i in range(cfg.mls_grad_instances):
        d = int(cfg.mls_grad_dims[i % len(cfg.mls_grad_dims)])
        r = float(_log_uniform(rng, 0.5, 4.0))
        mu_a, ka, mu_b, kb = _draw_mls_pair(rng, d)
        sphere = SphereConfig(d=d, r=r)
        err = mls_gradient_error(mu_a, ka, mu_b, kb, sphere)
        tracker.add(
            err,
            lambda: {"d": d, "r": r, "mu_a": mu_a.tolist(), "kappa_a": ka, "mu_b": mu_b.tolist(), "kappa_b": kb},
        )
    return tracker.result()


def _random_batch(rng: np.random.Generator, d: int, m: int, sim: SimilarityKind) -> ContrastiveBatch:
    while True:
        mus = [_unit(rng, d) for _ in range(m + 2)]
        kappas = _log_uniform(rng, 0.1, 100.0, m + 2)
        if sim is SimilarityKind.MLS:
            anchor_res = kappas[0] * mus[0]
            ok = all(
                np.linalg.norm(anchor_res + kappas[k] * mus[k]) >= MIN_RESULTANT_FRACTION * (kappas[0] + kappas[k])
                for k in range(1, m + 2)
            )
            if not ok:
                continue
        embs = [StochasticEmbedding(mu=mu, kappa=float(k)) for mu, k in zip(mus, kappas)]
        return ContrastiveBatch(anchor=embs[0], positive=embs[1], negatives=tuple(embs[2:]))


def info_nce_gradient_error(batch: ContrastiveBatch, sim: SimilarityKind, sphere: SphereConfig) -> float:
    """Relative error of the analytic InfoNCE batch gradient against central differences."""
    d = batch.d
    k = batch.num_negatives + 1
    anchor_mu, anchor_kappa, cand_mu, cand_kappa = batch.as_arrays()
    x = np.concatenate([anchor_mu, [anchor_kappa], cand_mu.ravel(), cand_kappa])
    kappa_slots = np.zeros(x.size, dtype=bool)
    kappa_slots[d] = True
    kappa_slots[d + 1 + k * d:] = True
    steps = np.where(kappa_slots, KAPPA_REL_STEP * np.maximum(np.abs(x), 1.0), MU_STEP)
    blocks = [slice(0, d)] + [slice(d + 1 + j * d, d + 1 + (j + 1) * d) for j in range(k)]

    def loss(points: np.ndarray) -> np.ndarray:
        m = points.shape[0]
        value, _, _ = info_nce_arrays(
            points[:, :d],
            points[:, d],
            points[:, d + 1:d + 1 + k * d].reshape(m, k, d),
            points[:, d + 1 + k * d:],
            sim,
            sphere,
        )
        return value

    numeric = central_differences(loss, x, steps, unit_blocks=blocks)
    g = info_nce_grad(batch, sim, sphere)
    analytic = np.concatenate([
        g.d_mu_anchor,
        [g.d_kappa_anchor],
        g.d_mu_positive,
        g.d_mu_negatives.ravel(),
        [g.d_kappa_positive],
        g.d_kappa_negatives,
    ])
    return relative_error(analytic, numeric)


def _check_info_nce_grad(name: str, sim: SimilarityKind, cfg: CheckConfig, rng: np.random.Generator) -> CheckResult:
    tracker = _Tracker(name, cfg.grad_rtol)
    for _ in range(cfg.info_nce_grad_instances):
        d = int(rng.choice([3, 8, 16]))
        m = int(rng.integers(1, 7))
        r = float(_log_uniform(rng, 0.5, 3.0))
        batch = _random_batch(rng, d, m, sim)
        sphere = SphereConfig(d=d, r=r)
        err = info_nce_gradient_error(batch, sim, sphere)
        tracker.add(err, lambda: {"d": d, "r": r, "similarity": sim.value, **_batch_inputs(batch)})
    return tracker.result()


def _batch_inputs(batch: ContrastiveBatch) -> Dict[str, Any]:
    def emb(e: StochasticEmbedding) -> Dict[str, Any]:
        return {"mu": e.mu.tolist(), "kappa": e.kappa}

    return {
        "anchor": emb(batch.anchor),
        "positive": emb(batch.positive),
        "negatives": [emb(n) for n in batch.negatives],
    }


def check_temperature_equivalence(cfg: CheckConfig, rng: np.random.Generator) -> CheckResult:
    """The radius form of the loss equals the literal temperature form."""
    tracker = _Tracker("temperature_equivalence", EQUIVALENCE_TOL)
    for _ in range(cfg.equivalence_batches):
        d = int(rng.integers(2, 17))
        m = int(rng.integers(1, 9))
        tau = float(_log_uniform(rng, 0.01, 10.0))
        batch = _random_batch(rng, d, m, SimilarityKind.SCALED_INNER_PRODUCT)
        tracker.add(equivalence_check(batch, tau), lambda: {"tau": tau, **_batch_inputs(batch)})
    return tracker.result()


def check_landscape_orderings(cfg: CheckConfig, rng: np.random.Generator) -> CheckResult:
    """Qualitative landscape orderings at the pinned (d, r); max_err counts failed orderings."""
    sphere = SphereConfig(d=cfg.orderings_d, r=cfg.orderings_r)
    report = landscape_orderings(
        sphere,
        kappa_high=cfg.orderings_kappa_high,
        kappa_high_disagree=cfg.orderings_kappa_high_disagree,
        seed=int(rng.integers(0, 2**31 - 1)),
    )
    flags = [report.confident_agreement, report.confident_disagreement, report.increasing_in_cos]
    failed = sum(not f for f in flags)
    return CheckResult(
        check="landscape_orderings",
        instances=len(flags),
        max_err=float(failed),
        threshold=0.0,
        passed=failed == 0,
        failing_inputs=None if failed == 0 else {
            "d": sphere.d,
            "r": sphere.r,
            "confident_agreement": report.confident_agreement,
            "confident_disagreement": report.confident_disagreement,
            "increasing_in_cos": report.increasing_in_cos,
            "scores": report.scores,
        },
    )


def encoder_gradient_error(sim: SimilarityKind, rng: np.random.Generator, hidden_dim: int = 5) -> float:
    """End-to-end parameter gradient of the batch loss on a tiny network (n=4, d=3, B=3, M=2)."""
    spec = DatasetSpec(input_dim=4, pool_size=16, eval_size=2)
    dataset = SyntheticDataset.generate(spec, rng)
    encoder = ToyEncoder.initialize(input_dim=4, embed_dim=3, hidden_dim=hidden_dim, rng=rng)
    views = dataset.contrastive_batch(batch_size=3, negatives=2, rng=rng)
    sphere = SphereConfig(d=3, r=2.0)

    def objective(params) -> float:
        probe = ToyEncoder(params=params, kappa_min=encoder.kappa_min, kappa_max=encoder.kappa_max)
        return batch_objective(probe, views, sim, sphere)[0]

    _, analytic = batch_objective(encoder, views, sim, sphere)
    numeric = parameter_differences(objective, encoder.params)
    return relative_error(
        np.concatenate([np.ravel(analytic[n]) for n in PARAM_NAMES]),
        np.concatenate([np.ravel(numeric[n]) for n in PARAM_NAMES]),
    )


def check_encoder_gradient(cfg: CheckConfig, rng: np.random.Generator) -> CheckResult:
    tracker = _Tracker("encoder_gradient", cfg.encoder_grad_rtol)
    for sim in SimilarityKind:
        seed = int(rng.integers(0, 2**31 - 1))
        err = encoder_gradient_error(sim, np.random.default_rng(seed))
        tracker.add(err, lambda: {"similarity": sim.value, "rng_seed": seed})
    return tracker.result()


SUITES: Dict[str, Callable[[CheckConfig, np.random.Generator], CheckResult]] = {
    "bessel_recurrence": check_bessel_recurrence,
    "normalizer_identity": check_normalizer_identity,
    "mls_vs_monte_carlo": check_mls_vs_monte_carlo,
    "mls_grad": check_mls_grad,
    "info_nce_grad_mls": lambda cfg, rng: _check_info_nce_grad("info_nce_grad_mls", SimilarityKind.MLS, cfg, rng),
    "info_nce_grad_inner": lambda cfg, rng: _check_info_nce_grad(
        "info_nce_grad_inner", SimilarityKind.SCALED_INNER_PRODUCT, cfg, rng
    ),
    "temperature_equivalence": check_temperature_equivalence,
    "landscape_orderings": check_landscape_orderings,
    "encoder_gradient": check_encoder_gradient,
}


def run_checks(cfg: CheckConfig, seed: int) -> List[CheckResult]:
    """Run the selected suites in their fixed order."""
    results = []
    for name in ALL_SUITES:
        if name not in cfg.suites:
            continue
        rng = np.random.default_rng([seed, ALL_SUITES.index(name)])
        result = SUITES[name](cfg, rng)
        logger.info(
            "check %-22s %s  instances=%d max_err=%.3g threshold=%.3g",
            name, "PASS" if result.passed else "FAIL", result.instances, result.max_err, result.threshold,
        )
        results.append(result)
    return results


def report_frame(results: List[CheckResult]) -> pd.DataFrame:
    return pd.DataFrame(
        [[r.check, r.instances, r.max_err, r.threshold, r.passed] for r in results],
        columns=REPORT_COLUMNS,
    )
