"""Negative-ELBO training with hand-written reverse-mode gradients and Adam.

Per minibatch the minimized loss is ``mean_nll + kl_weight * KL(q || prior)``.
Under the default ``per-batch`` rule ``kl_weight = 1 / num_batches``, so one
epoch charges the model KL exactly once.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import Dataset, SplitSpec, stratified_split_indices
from .model import PROB_CLAMP, BayesKanModel, ModelSpec, ParameterDraw, clamp_proba
from .splines import NonFiniteInput
from .variational import kl_gradients

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
KL_RULES = ("per-batch", "per-example", "none")


class TrainingDivergence(RuntimeError):
    """Raised when a loss or gradient goes non-finite."""


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    max_epochs: int = 100
    patience: int = 10
    batch_size: int = 32
    mc_train_samples: int = 1
    kl_scale_rule: str = "per-example"
    seed: int = 0
    validation_fraction: float = 0.1
    min_delta: float = 1e-5
    sigma_init: float = 0.05
    grad_clip: float | None = None

    def __post_init__(self):
        for name in ("learning_rate", "max_epochs", "patience", "batch_size", "mc_train_samples", "sigma_init"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("max_epochs", "patience", "batch_size", "mc_train_samples"):
            if int(getattr(self, name)) != getattr(self, name):
                raise ValueError(f"{name} must be an integer")
        if self.kl_scale_rule not in KL_RULES:
            raise ValueError(f"kl_scale_rule must be one of {KL_RULES}, got {self.kl_scale_rule!r}")
        if not 0.0 < self.validation_fraction < 0.5:
            raise ValueError("validation_fraction must lie in (0, 0.5)")
        if self.min_delta < 0:
            raise ValueError("min_delta must be nonnegative")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise ValueError("grad_clip must be positive when set")

    def kl_weight(self, num_batches: int, num_examples: int) -> float:
        if self.kl_scale_rule == "per-batch":
            return 1.0 / num_batches
        if self.kl_scale_rule == "per-example":
            return 1.0 / num_examples
        return 0.0


@dataclass(frozen=True)
class LossBreakdown:
    nll: float
    kl: float
    loss: float


@dataclass
class GradientRecord:
    d_mu: np.ndarray
    d_rho: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.d_mu, self.d_rho])


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_nll: float
    train_kl: float
    val_nll: float
    val_acc: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    HEADER = ("epoch", "train_loss", "train_nll", "train_kl", "val_nll", "val_acc")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.HEADER)
        for r in self.records:
            writer.writerow([r.epoch] + [repr(float(getattr(r, k))) for k in self.HEADER[1:]])
        return buf.getvalue()


def nll_bernoulli(probs, labels) -> float:
    """Mean negative Bernoulli log-likelihood of ``labels`` under ``probs``."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if probs.shape != labels.shape:
        raise ValueError(f"length mismatch: {probs.shape} probabilities vs {labels.shape} labels")
    if probs.size == 0:
        raise ValueError("nll of an empty batch is undefined")
    return float(np.mean(-(labels * np.log(probs) + (1.0 - labels) * np.log1p(-probs))))


def _draw_eps(m: BayesKanModel, rng: np.random.Generator, n_samples: int) -> list[np.ndarray]:
    return [rng.standard_normal(m.n_params) for _ in range(n_samples)]


def _kl_part(m: BayesKanModel, kl_weight: float) -> tuple[float, float]:
    kl = m.kl()
    return kl, (kl_weight * kl if kl_weight else 0.0)


def _finite_logits(logits: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(logits)):
        raise TrainingDivergence(f"{int(np.sum(~np.isfinite(logits)))} non-finite logits in the batch")
    return logits


def _forward(m: BayesKanModel, X, draw: ParameterDraw, keep_cache: bool = False):
    # overflowing hidden activations reach the next spline layer as inf
    try:
        out = m.logits(X, draw, keep_cache)
    except NonFiniteInput as exc:
        raise TrainingDivergence(f"hidden activations became non-finite: {exc}") from exc
    _finite_logits(out[0] if keep_cache else out)
    return out


def loss_with_eps(m: BayesKanModel, X, y, kl_weight: float, eps_list) -> LossBreakdown:
    """Loss for frozen ``eps`` draws (the quantity :func:`gradients_with_eps` differentiates)."""
    y = np.asarray(y, dtype=float)
    nll = float(np.mean([nll_bernoulli(clamp_proba(expit(_forward(m, X, m.draw(eps)))), y) for eps in eps_list]))
    kl, charge = _kl_part(m, kl_weight)
    return LossBreakdown(nll, kl, nll + charge)


def gradients_with_eps(m: BayesKanModel, X, y, kl_weight: float, eps_list) -> tuple[LossBreakdown, GradientRecord]:
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    d_mu = np.zeros(m.n_params)
    d_rho = np.zeros(m.n_params)
    sig_grad = expit(m.rho)  # d softplus(rho) / d rho
    nlls = []
    for eps in eps_list:
        draw = m.draw(eps)
        logits, caches = _forward(m, X, draw, keep_cache=True)
        p = expit(logits)
        pc = clamp_proba(p)
        nlls.append(nll_bernoulli(pc, y))
        # gradient of the clamped loss: zero where the clamp is active
        active = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
        dlogits = np.where(active, (p - y) / len(y), 0.0)
        g = m.backprop(caches, dlogits, draw)
        d_mu += g
        d_rho += g * eps * sig_grad
    n = len(eps_list)
    d_mu /= n
    d_rho /= n
    nll = float(np.mean(nlls))
    kl, charge = _kl_part(m, kl_weight)
    if kl_weight:
        kmu, krho = kl_gradients(m.mu, m.rho, m.spec.prior)
        d_mu += kl_weight * kmu
        d_rho += kl_weight * krho
    record = GradientRecord(d_mu, d_rho)
    loss = LossBreakdown(nll, kl, nll + charge)
    if not (math.isfinite(loss.loss) and np.all(np.isfinite(d_mu)) and np.all(np.isfinite(d_rho))):
        bad = np.flatnonzero(~np.isfinite(record.as_vector()))
        raise TrainingDivergence(
            f"non-finite training signal: loss={loss.loss}, nll={nll}, kl={kl}, "
            f"{bad.size} non-finite gradient entries (first at flat index {bad[:5].tolist()})"
        )
    return loss, record


def elbo_loss(m: BayesKanModel, X, y, kl_weight: float, rng: np.random.Generator, mc_samples: int = 1) -> LossBreakdown:
    if kl_weight < 0:
        raise ValueError("kl_weight must be nonnegative")
    if len(y) == 0:
        raise ValueError("empty batch")
    return loss_with_eps(m, X, y, kl_weight, _draw_eps(m, rng, mc_samples))


def backward(m: BayesKanModel, X, y, kl_weight: float, rng: np.random.Generator,
             mc_samples: int = 1) -> tuple[LossBreakdown, GradientRecord]:
    """Reverse-mode gradient of the stochastic negative ELBO w.r.t. every mu and rho."""
    if kl_weight < 0:
        raise ValueError("kl_weight must be nonnegative")
    if len(y) == 0:
        raise ValueError("empty batch")
    return gradients_with_eps(m, X, y, kl_weight, _draw_eps(m, rng, mc_samples))


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray, lr: float) -> tuple[np.ndarray, AdamState]:
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ValueError("Adam parameter, gradient and state lengths disagree")
    if not (np.all(np.isfinite(params)) and np.all(np.isfinite(grads))):
        raise ValueError("Adam received non-finite parameters or gradients")
    t = state.t + 1
    m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * grads
    v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * grads * grads
    m_hat = m / (1.0 - ADAM_BETA1**t)
    v_hat = v / (1.0 - ADAM_BETA2**t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    if not np.all(np.isfinite(new)):
        raise TrainingDivergence("Adam update produced non-finite parameters")
    return new, AdamState(m, v, t)


def _evaluate(m: BayesKanModel, X, y) -> tuple[float, float]:
    p = clamp_proba(expit(_forward(m, X, m.mean_draw())))
    return nll_bernoulli(p, y), float(np.mean((p >= 0.5) == (y == 1)))


def train(spec: ModelSpec, train_set: Dataset, config: TrainConfig,
          init: BayesKanModel | None = None) -> tuple[BayesKanModel, TrainHistory]:
    """Fit the variational posterior; return the best-validation checkpoint.

    A stratified ``validation_fraction`` of ``train_set`` is held out for early
    stopping on mean-mode validation NLL. ``init`` overrides the random
    initialization (it is copied, never mutated).
    """
    X, y = train_set.features, train_set.labels
    if len(y) == 0:
        raise ValueError("cannot train on an empty dataset")
    if len(np.unique(y)) < 2:
        raise ValueError("training data must contain both classes")
    if X.shape[1] != spec.input_dim:
        raise ValueError(f"spec expects {spec.input_dim} features, dataset has {X.shape[1]}")

    seeds = np.random.SeedSequence(config.seed).spawn(3)
    split_seed = int(seeds[0].generate_state(1)[0])
    fit_idx, val_idx = stratified_split_indices(y, SplitSpec(config.validation_fraction, split_seed))
    X_fit, y_fit = X[fit_idx], y[fit_idx]
    X_val, y_val = X[val_idx], y[val_idx]

    model = init.copy() if init is not None else BayesKanModel.initialize(
        spec, np.random.default_rng(seeds[1]), config.sigma_init)
    if init is not None and init.spec != spec:
        raise ValueError("initial model does not match the requested spec")
    rng = np.random.default_rng(seeds[2])

    n = len(y_fit)
    num_batches = math.ceil(n / config.batch_size)
    kl_weight = config.kl_weight(num_batches, n)
    params = np.concatenate([model.mu, model.rho])
    state = AdamState.fresh(params.size)
    P = model.n_params

    history = TrainHistory()
    best_val = math.inf
    best_params = params.copy()
    patience_ref = math.inf
    wait = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        losses, nlls = [], []
        for b in range(num_batches):
            idx = order[b * config.batch_size : (b + 1) * config.batch_size]
            loss, grads = backward(model, X_fit[idx], y_fit[idx], kl_weight, rng, config.mc_train_samples)
            g = grads.as_vector()
            if config.grad_clip is not None:
                norm = float(np.linalg.norm(g))
                if norm > config.grad_clip:
                    g = g * (config.grad_clip / norm)
            params, state = adam_step(state, params, g, config.learning_rate)
            model.mu, model.rho = params[:P].copy(), params[P:].copy()
            losses.append(loss.loss)
            nlls.append(loss.nll)

        val_nll, val_acc = _evaluate(model, X_val, y_val)
        if not math.isfinite(val_nll):
            raise TrainingDivergence(f"validation nll became non-finite at epoch {epoch}")
        history.records.append(EpochRecord(epoch, float(np.mean(losses)), float(np.mean(nlls)),
                                           model.kl(), val_nll, val_acc))
        if val_nll < best_val:
            best_val = val_nll
            history.best_epoch = epoch
            best_params = params.copy()
        if val_nll < patience_ref - config.min_delta:
            patience_ref = val_nll
            wait = 0
        else:
            wait += 1
            if wait >= config.patience:
                break

    model.mu, model.rho = best_params[:P].copy(), best_params[P:].copy()
    return model, history
