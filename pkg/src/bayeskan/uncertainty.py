"""Monte Carlo predictive distributions and their uncertainty summaries.

Entropies are in nats. Sample ``s`` of a predictive distribution uses the
parameter draw seeded by ``(seed, s)`` and shared by every input row, so results
do not depend on evaluation order or on how samples are spread over workers.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .model import BayesKanModel, clamp_proba


def _mean(values: np.ndarray) -> float:
    # a constant sample averages to exactly that constant (np.mean can be an ulp off)
    if np.all(values == values[0]):
        return float(values[0])
    return float(np.mean(values))


@dataclass(frozen=True, eq=False)
class PredictiveDistribution:
    mc_probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.mc_probs, dtype=float)
        if probs.ndim != 1 or probs.size < 1:
            raise ValueError("a predictive distribution needs at least one sample")
        object.__setattr__(self, "mc_probs", probs)

    @property
    def mean_prob(self) -> float:
        return _mean(self.mc_probs)

    @property
    def n_samples(self) -> int:
        return self.mc_probs.size


@dataclass(frozen=True)
class UncertaintyBreakdown:
    total: float
    aleatoric: float
    epistemic: float


@dataclass(frozen=True)
class CredibleInterval:
    lo: float
    hi: float
    level: float


def sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def _sample_probs(m: BayesKanModel, X: np.ndarray, seed: int, index: int) -> np.ndarray:
    draw = m.sample_draw(sample_rng(seed, index))
    return clamp_proba(expit(m.logits(X, draw)))


def mc_predict_batch(m: BayesKanModel, X, n_samples: int = 100, seed: int = 0,
                     workers: int | None = None) -> np.ndarray:
    """Sampled probabilities of shape ``(n_samples, n_rows)``."""
    if n_samples < 1:
        raise ValueError("need at least one Monte Carlo sample")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(lambda s: _sample_probs(m, X, seed, s), range(n_samples)))
    else:
        rows = [_sample_probs(m, X, seed, s) for s in range(n_samples)]
    return np.stack(rows)


def mc_predict(m: BayesKanModel, x, n_samples: int = 100, seed: int = 0, workers: int | None = None) -> PredictiveDistribution:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("mc_predict takes a single feature vector; use mc_predict_batch for matrices")
    return PredictiveDistribution(mc_predict_batch(m, x[None, :], n_samples, seed, workers)[:, 0])


def binary_entropy(p):
    """Entropy of Bernoulli(p) in nats, with H(0) = H(1) = 0."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(p * np.log(p) + (1.0 - p) * np.log1p(-p))
    return np.where((p <= 0.0) | (p >= 1.0), 0.0, h)


def decompose(pred: PredictiveDistribution) -> UncertaintyBreakdown:
    """Total = H(mean prob); aleatoric = mean H(p_s); epistemic = the (clamped) gap."""
    total = float(binary_entropy(pred.mean_prob))
    aleatoric = _mean(binary_entropy(pred.mc_probs))
    epistemic = max(total - aleatoric, 0.0)
    return UncertaintyBreakdown(aleatoric + epistemic, aleatoric, epistemic)


def _nearest_rank(fraction: float, n: int) -> int:
    # round away float noise such as 0.05 / 2 * 100 = 2.5000000000000004
    return min(max(math.ceil(round(fraction * n, 9)), 1), n)


def credible_interval(pred: PredictiveDistribution, level: float = 0.95) -> CredibleInterval:
    """Nearest-rank empirical interval; both ends are actual samples."""
    if not 0.0 < level <= 1.0:
        raise ValueError(f"level must lie in (0, 1], got {level}")
    ordered = np.sort(pred.mc_probs)
    n = ordered.size
    lo = ordered[_nearest_rank((1.0 - level) / 2.0, n) - 1]
    hi = ordered[_nearest_rank((1.0 + level) / 2.0, n) - 1]
    return CredibleInterval(float(lo), float(hi), level)


def expected_calibration_error(mean_probs, labels, bins: int = 10) -> float:
    """Top-label ECE with equal-width, right-inclusive confidence bins on [0, 1]."""
    probs = np.asarray(mean_probs, dtype=float)
    labels = np.asarray(labels)
    if probs.shape != labels.shape:
        raise ValueError(f"length mismatch: {probs.shape} vs {labels.shape}")
    if bins < 1:
        raise ValueError("bins must be at least 1")
    if probs.size == 0:
        raise ValueError("ECE of an empty set is undefined")
    predicted = (probs >= 0.5).astype(int)
    confidence = np.where(predicted == 1, probs, 1.0 - probs)
    correct = (predicted == labels).astype(float)
    which = np.clip(np.ceil(np.round(confidence * bins, 9)).astype(int) - 1, 0, bins - 1)
    ece = 0.0
    for b in range(bins):
        in_bin = which == b
        if in_bin.any():
            ece += in_bin.mean() * abs(correct[in_bin].mean() - confidence[in_bin].mean())
    return float(ece)


REPORT_HEADER = ("index", "mean_prob", "ci_lo", "ci_hi", "total", "aleatoric", "epistemic", "predicted_class")


def uncertainty_report(mc_probs: np.ndarray, level: float = 0.95) -> list[tuple]:
    """One row per input column of an ``(S, N)`` sample matrix."""
    rows = []
    for i in range(mc_probs.shape[1]):
        pred = PredictiveDistribution(mc_probs[:, i])
        parts = decompose(pred)
        ci = credible_interval(pred, level)
        rows.append((i, pred.mean_prob, ci.lo, ci.hi, parts.total, parts.aleatoric, parts.epistemic,
                     int(pred.mean_prob >= 0.5)))
    return rows


def report_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for row in rows:
        writer.writerow([row[0], *(repr(float(v)) for v in row[1:7]), row[7]])
    return buf.getvalue()
