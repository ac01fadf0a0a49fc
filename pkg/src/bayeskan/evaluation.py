"""Classification metrics, bootstrap intervals, baselines and interpretability exports."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from .data import Dataset, SplitSpec, standardize_apply, standardize_fit, stratified_split
from .model import BayesKanModel, ModelSpec, clamp_proba, edge_eval
from .splines import basis_values
from .training import TrainConfig, TrainHistory, train
from .uncertainty import PredictiveDistribution, credible_interval, mc_predict_batch, sample_rng
from .variational import RHO_FLOOR

METRICS = ("accuracy", "f1", "auc")
MODEL_NAMES = ("bayesian-kan", "logistic-regression", "traditional-nn")
TABLE_HEADER = ("dataset", "model", "accuracy", "f1", "auc", "acc_ci_lo", "acc_ci_hi",
                "f1_ci_lo", "f1_ci_hi", "auc_ci_lo", "auc_ci_hi")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _check_pair(probs, labels) -> tuple[np.ndarray, np.ndarray]:
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels).astype(int)
    if probs.shape != labels.shape:
        raise ValueError(f"length mismatch: {probs.shape} scores vs {labels.shape} labels")
    return probs, labels


def confusion(probs, labels, threshold: float = 0.5) -> ConfusionCounts:
    probs, labels = _check_pair(probs, labels)
    pred = probs >= threshold
    pos = labels == 1
    return ConfusionCounts(
        tp=int(np.sum(pred & pos)),
        fp=int(np.sum(pred & ~pos)),
        tn=int(np.sum(~pred & ~pos)),
        fn=int(np.sum(~pred & pos)),
    )


def accuracy(c: ConfusionCounts) -> float:
    if c.n == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return (c.tp + c.tn) / c.n


def f1(c: ConfusionCounts) -> float:
    if c.tp == 0:
        return 0.0
    precision = c.tp / (c.tp + c.fp)
    recall = c.tp / (c.tp + c.fn)
    return 2 * precision * recall / (precision + recall)


def auc_roc(scores, labels) -> float:
    """Mann-Whitney AUC via average ranks; ties between classes count one half."""
    scores, labels = _check_pair(scores, labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined unless both classes are present")
    ranks = rankdata(scores)  # average ranks: exact half-integers
    u = float(np.sum(ranks[labels == 1])) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def metric_value(name: str, probs, labels) -> float:
    if name == "accuracy":
        return accuracy(confusion(probs, labels))
    if name == "f1":
        return f1(confusion(probs, labels))
    if name == "auc":
        return auc_roc(probs, labels)
    raise ValueError(f"unknown metric {name!r}; choose from {METRICS}")


def nearest_rank_interval(values, level: float) -> tuple[float, float]:
    values = np.sort(np.asarray(values, dtype=float))
    n = values.size
    lo_rank = min(max(math.ceil(round((1.0 - level) / 2.0 * n, 9)), 1), n)
    hi_rank = min(max(math.ceil(round((1.0 + level) / 2.0 * n, 9)), 1), n)
    return float(values[lo_rank - 1]), float(values[hi_rank - 1])


def bootstrap_values(metric: str, probs, labels, n_boot: int = 1000, seed: int = 0,
                     max_retries: int = 10) -> np.ndarray:
    """Metric over ``n_boot`` with-replacement resamples; resample ``b`` is seeded by ``(seed, b)``."""
    probs, labels = _check_pair(probs, labels)
    n = labels.size
    if n < 2:
        raise ValueError("bootstrap needs at least two examples")
    if metric == "auc" and len(np.unique(labels)) < 2:
        raise ValueError("AUC bootstrap needs both classes present")
    values = []
    for b in range(n_boot):
        rng = np.random.default_rng([int(seed), b])
        for _ in range(max_retries + 1):
            idx = rng.integers(0, n, size=n)
            if metric != "auc" or 0 < labels[idx].sum() < n:
                values.append(metric_value(metric, probs[idx], labels[idx]))
                break
    return np.asarray(values)


def bootstrap_ci(metric: str, probs, labels, n_boot: int = 1000, level: float = 0.95,
                 seed: int = 0) -> tuple[float, float]:
    """Nearest-rank percentile bootstrap interval for ``metric``."""
    values = bootstrap_values(metric, probs, labels, n_boot, seed)
    if values.size == 0:
        raise ValueError("every bootstrap resample was degenerate")
    return nearest_rank_interval(values, level)


@dataclass
class MetricsReport:
    model_name: str
    accuracy: float
    f1: float
    auc: float
    intervals: dict[str, tuple[float, float]]
    n_test: int

    def row(self) -> list[float]:
        vals = [self.accuracy, self.f1, self.auc]
        for name in METRICS:
            vals.extend(self.intervals[name])
        return vals


def metrics_report(model_name: str, probs, labels, n_boot: int = 1000, level: float = 0.95,
                   seed: int = 0) -> MetricsReport:
    probs, labels = _check_pair(probs, labels)
    c = confusion(probs, labels)
    intervals = {name: bootstrap_ci(name, probs, labels, n_boot, level, seed) for name in METRICS}
    return MetricsReport(model_name, accuracy(c), f1(c), auc_roc(probs, labels), intervals, labels.size)


# ---------------------------------------------------------------------------
# baselines


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float
    epochs_run: int = 0

    def predict_proba(self, X) -> np.ndarray:
        return clamp_proba(expit(np.asarray(X, dtype=float) @ self.weights + self.bias))


def train_logreg(train_set: Dataset, lr: float = 0.5, epochs: int = 20000, tol: float = 1e-6) -> LinearModel:
    """Full-batch gradient descent on the mean log-loss from a zero start."""
    X, y = train_set.features, train_set.labels.astype(float)
    if len(np.unique(y)) < 2:
        raise ValueError("logistic regression needs both classes present")
    w = np.zeros(X.shape[1])
    b = 0.0
    for epoch in range(1, epochs + 1):
        r = expit(X @ w + b) - y
        gw = X.T @ r / len(y)
        gb = float(r.mean())
        if math.sqrt(float(gw @ gw) + gb * gb) < tol:
            return LinearModel(w, b, epoch - 1)
        w = w - lr * gw
        b = b - lr * gb
    return LinearModel(w, b, epochs)


def point_estimate(model: BayesKanModel) -> BayesKanModel:
    """Copy of ``model`` with every scale floored to zero (a point-mass posterior)."""
    out = model.copy()
    out.rho = np.full_like(out.rho, RHO_FLOOR)
    return out


def train_mlp_baseline(train_set: Dataset, config: TrainConfig, spec: ModelSpec | None = None,
                       ) -> tuple[BayesKanModel, TrainHistory]:
    """Deterministic MLP: the dense preset with floored scales, trained on plain NLL.

    Zero scales make every draw equal the means and give the scales zero
    gradient, so the shared Adam/early-stopping loop reduces to point-estimate
    training.
    """
    spec = spec or ModelSpec.bayes_mlp(train_set.n_features)
    config = replace(config, kl_scale_rule="none")
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    init = point_estimate(BayesKanModel.initialize(spec, np.random.default_rng(seeds[1]), config.sigma_init))
    return train(spec, train_set, config, init=init)


# ---------------------------------------------------------------------------
# interpretability


@dataclass(frozen=True)
class ImportanceRanking:
    entries: tuple[tuple[str, float], ...]

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.entries]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("rank", "feature", "score"))
        for rank, (name, score) in enumerate(self.entries, start=1):
            writer.writerow((rank, name, repr(float(score))))
        return buf.getvalue()


def importance_scores(m: BayesKanModel, X) -> np.ndarray:
    """Mean absolute first-layer edge output per input feature (mean mode).

    For a dense first layer the score is the mean ``|w_ji|`` over output units.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("feature importance needs at least one row")
    layer = m.layers[0]
    weights, _ = layer.split(m.mu[layer.offset : layer.offset + layer.n_params])
    if layer.kind == "dense":
        return np.abs(weights).mean(axis=0)
    feats = np.concatenate([np.maximum(X, 0.0)[..., None], basis_values(X, m.knots)], axis=-1)  # (N, in, n_coef)
    edge_out = np.einsum("nic,jic->nji", feats, weights)
    return np.abs(edge_out).mean(axis=(0, 1))


def feature_importance(m: BayesKanModel, data: Dataset) -> ImportanceRanking:
    scores = importance_scores(m, data.features)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return ImportanceRanking(tuple((data.feature_names[i], float(scores[i])) for i in order))


def permutation_importance(predict, data: Dataset, seed: int = 0) -> np.ndarray:
    """AUC drop when each column is shuffled in turn."""
    base = auc_roc(predict(data.features), data.labels)
    rng = np.random.default_rng(seed)
    drops = np.empty(data.n_features)
    for c in range(data.n_features):
        X = data.features.copy()
        X[:, c] = X[rng.permutation(len(X)), c]
        drops[c] = base - auc_roc(predict(X), data.labels)
    return drops


CURVE_HEADER = ("x", "mean", "lo", "hi")


def export_spline_curve(m: BayesKanModel, layer_idx: int, out_idx: int, in_idx: int,
                        n_points: int = 201, n_samples: int = 100, seed: int = 0,
                        level: float = 0.95) -> np.ndarray:
    """Rows ``(x, mean-mode value, lo, hi)`` over the spline domain for one edge."""
    if not 0 <= layer_idx < len(m.layers):
        raise IndexError(f"layer index {layer_idx} out of range (model has {len(m.layers)} layers)")
    if n_points < 2:
        raise ValueError("need at least two curve points")
    edge = m.edge(layer_idx, out_idx, in_idx)
    xs = np.linspace(m.knots.domain_min, m.knots.domain_max, n_points)
    mean = edge_eval(edge, xs, m.mean_draw())
    samples = np.stack([edge_eval(edge, xs, m.sample_draw(sample_rng(seed, s))) for s in range(n_samples)])
    band = np.empty((n_points, 2))
    for p in range(n_points):
        ci = credible_interval(PredictiveDistribution(samples[:, p]), level)
        band[p] = ci.lo, ci.hi
    return np.column_stack([xs, mean, band])


def curve_csv(curve: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_HEADER)
    for row in curve:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# comparison protocol


@dataclass
class SeedRun:
    seed: int
    reports: dict[str, MetricsReport]
    bkan: BayesKanModel
    bkan_history: TrainHistory
    test: Dataset
    train: Dataset


@dataclass
class Comparison:
    dataset: str
    runs: list[SeedRun] = field(default_factory=list)

    def averaged(self) -> dict[str, list[float]]:
        return {name: np.mean([run.reports[name].row() for run in self.runs], axis=0).tolist()
                for name in MODEL_NAMES}


def prepare_split(ds: Dataset, seed: int, test_fraction: float = 0.2) -> tuple[Dataset, Dataset]:
    """Stratified split, then standardization fitted on the training part."""
    train_raw, test_raw = stratified_split(ds, SplitSpec(test_fraction, seed))
    stats = standardize_fit(train_raw)
    return standardize_apply(stats, train_raw), standardize_apply(stats, test_raw)


def run_seed(ds: Dataset, spec: ModelSpec, config: TrainConfig, seed: int, mc_samples: int = 100,
             n_boot: int = 1000, test_fraction: float = 0.2) -> SeedRun:
    train_set, test_set = prepare_split(ds, seed, test_fraction)
    cfg = replace(config, seed=seed)
    X, y = test_set.features, test_set.labels

    bkan, history = train(spec, train_set, cfg)
    bkan_probs = mc_predict_batch(bkan, X, mc_samples, seed).mean(axis=0)
    logreg = train_logreg(train_set)
    mlp, _ = train_mlp_baseline(train_set, cfg)
    mlp_probs = clamp_proba(expit(mlp.logits(X, mlp.mean_draw())))

    reports = {
        "bayesian-kan": metrics_report("bayesian-kan", bkan_probs, y, n_boot, seed=seed),
        "logistic-regression": metrics_report("logistic-regression", logreg.predict_proba(X), y, n_boot, seed=seed),
        "traditional-nn": metrics_report("traditional-nn", mlp_probs, y, n_boot, seed=seed),
    }
    return SeedRun(seed, reports, bkan, history, test_set, train_set)


def compare(name: str, ds: Dataset, spec: ModelSpec, config: TrainConfig, seeds, mc_samples: int = 100,
            n_boot: int = 1000, test_fraction: float = 0.2) -> Comparison:
    """Train all three models on identical per-seed splits and collect test metrics."""
    result = Comparison(name)
    for seed in seeds:
        result.runs.append(run_seed(ds, spec, config, seed, mc_samples, n_boot, test_fraction))
    return result


def comparison_csv(comparisons) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_HEADER)
    for comp in comparisons:
        for model_name, row in comp.averaged().items():
            writer.writerow([comp.dataset, model_name, *(repr(float(v)) for v in row)])
    return buf.getvalue()
