import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bayeskan.data import Dataset
from bayeskan.model import BayesKanModel, LayerSpec, ModelSpec, SplineConfig, predict_proba
from bayeskan.training import (
    AdamState,
    TrainConfig,
    TrainingDivergence,
    adam_step,
    backward,
    elbo_loss,
    gradients_with_eps,
    loss_with_eps,
    nll_bernoulli,
    train,
)
from bayeskan.variational import RHO_FLOOR, inverse_softplus

from conftest import separable_2d

SMALL = SplineConfig(grid_size=3, degree=2, domain=(-2.0, 2.0))


def random_model(spec, seed, sigma=0.1):
    rng = np.random.default_rng(seed)
    n = spec.param_count
    return BayesKanModel(spec, rng.normal(0, 0.5, n), np.full(n, float(inverse_softplus(sigma))) + rng.normal(0, 0.3, n))


def fd_gradient(m, X, y, kl_weight, eps_list, h=1e-5):
    """Central differences of the frozen-eps loss over every mu and rho."""
    def loss(mu, rho):
        return loss_with_eps(BayesKanModel(m.spec, mu, rho), X, y, kl_weight, eps_list).loss

    out = np.empty(2 * m.n_params)
    for which, base in enumerate((m.mu, m.rho)):
        for i in range(m.n_params):
            up, down = base.copy(), base.copy()
            up[i] += h
            down[i] -= h
            if which == 0:
                f_up, f_down = loss(up, m.rho), loss(down, m.rho)
            else:
                f_up, f_down = loss(m.mu, up), loss(m.mu, down)
            out[which * m.n_params + i] = (f_up - f_down) / (2 * h)
    return out


def relative_errors(analytic, numeric, floor=1e-7):
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def test_nll_examples():
    assert nll_bernoulli([0.5], [1]) == pytest.approx(math.log(2), abs=1e-6)
    assert nll_bernoulli([1 - 1e-7], [1]) == pytest.approx(1e-7, rel=1e-3)
    assert nll_bernoulli([0.9, 0.2], [1, 0]) == pytest.approx(0.164252, abs=1e-6)
    with pytest.raises(ValueError):
        nll_bernoulli([0.5, 0.5], [1])


def test_elbo_definitions():
    spec = ModelSpec.bkan(3, hidden=[7], spline=SMALL)
    m = random_model(spec, 0)
    rng = np.random.default_rng(0)
    X = rng.normal(size=(16, 3))
    y = (rng.random(16) > 0.5).astype(int)
    lb = elbo_loss(m, X, y, 0.0, np.random.default_rng(1))
    assert lb.loss == lb.nll
    assert lb == elbo_loss(m, X, y, 0.0, np.random.default_rng(1))
    weighted = elbo_loss(m, X, y, 0.25, np.random.default_rng(1))
    assert weighted.loss == pytest.approx(weighted.nll + 0.25 * weighted.kl)

    at_prior = BayesKanModel(spec, np.zeros(spec.param_count), np.full(spec.param_count, float(inverse_softplus(1.0))))
    assert elbo_loss(at_prior, X, y, 1.0, np.random.default_rng(1)).kl == pytest.approx(0.0, abs=1e-10)


def test_kl_gradient_single_parameter():
    # one weight at N(1, 1) against a N(0, 1) prior; the input is zero so the data term cannot touch it
    spec = ModelSpec(1, (LayerSpec("dense", 1),))
    m = BayesKanModel(spec, [1.0, 0.0], [float(inverse_softplus(1.0))] * 2)
    X = np.zeros((4, 1))
    y = np.array([0, 1, 0, 1])
    kl_weight = 0.3
    eps = [np.array([0.7, -1.1])]
    _, grads = gradients_with_eps(m, X, y, kl_weight, eps)
    assert grads.d_mu[0] == pytest.approx(kl_weight * 1.0, abs=1e-15)


def test_balanced_batch_zero_model_bias_gradient():
    spec = ModelSpec.bkan(3, hidden=[7], spline=SMALL)
    m = BayesKanModel(spec, np.zeros(spec.param_count), np.full(spec.param_count, RHO_FLOOR))
    X = np.random.default_rng(0).normal(size=(10, 3))
    y = np.array([0, 1] * 5)
    _, grads = backward(m, X, y, 0.0, np.random.default_rng(0))
    assert grads.d_mu[-1] == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_array_equal(grads.d_rho, 0.0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradients_match_finite_differences(seed):
    spec = ModelSpec.bkan(3, hidden=[7], spline=SplineConfig(3, 2, (-2.0, 2.0)))
    m = random_model(spec, seed)
    rng = np.random.default_rng(100 + seed)
    X = rng.normal(size=(12, 3))
    y = (rng.random(12) > 0.5).astype(int)
    eps = [rng.standard_normal(m.n_params) for _ in range(2)]
    _, grads = gradients_with_eps(m, X, y, 0.05, eps)
    err = relative_errors(grads.as_vector(), fd_gradient(m, X, y, 0.05, eps))
    assert err.max() <= 1e-4


def test_dense_gradients_match_finite_differences():
    spec = ModelSpec(3, (LayerSpec("dense", 5, "relu"), LayerSpec("dense", 4, "sigmoid"), LayerSpec("dense", 1)))
    m = random_model(spec, 7)
    rng = np.random.default_rng(7)
    X = rng.normal(size=(12, 3))
    y = (rng.random(12) > 0.5).astype(int)
    eps = [rng.standard_normal(m.n_params)]
    _, grads = gradients_with_eps(m, X, y, 0.1, eps)
    assert relative_errors(grads.as_vector(), fd_gradient(m, X, y, 0.1, eps)).max() <= 1e-4


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    spec = ModelSpec(2, (LayerSpec("dense", 1),))
    m = BayesKanModel(spec, [1e308, -1e308, 0.0], [RHO_FLOOR] * 3)
    with pytest.raises(TrainingDivergence):
        gradients_with_eps(m, np.array([[1e308, 1e308]]), np.array([1]), 0.0, [np.zeros(3)])


def test_adam_examples():
    params, state = adam_step(AdamState.fresh(3), np.array([1.0, 2.0, 3.0]), np.zeros(3), 0.01)
    np.testing.assert_array_equal(params, [1.0, 2.0, 3.0])
    assert state.t == 1
    params, _ = adam_step(AdamState.fresh(1), np.array([0.5]), np.array([1.0]), 0.001)
    assert params[0] - 0.5 == pytest.approx(-0.001 / (1 + 1e-8), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=6), st.randoms(use_true_random=False))
def test_adam_is_elementwise(grads, rnd):
    grads = np.array(grads)
    params = np.linspace(-1, 1, grads.size)
    perm = np.array(rnd.sample(range(grads.size), grads.size))
    a, _ = adam_step(AdamState.fresh(grads.size), params, grads, 0.01)
    b, _ = adam_step(AdamState.fresh(grads.size), params[perm], grads[perm], 0.01)
    np.testing.assert_array_equal(a[perm], b)


def test_adam_rejects_non_finite():
    with pytest.raises(ValueError):
        adam_step(AdamState.fresh(1), np.array([0.0]), np.array([np.nan]), 0.1)


def test_config_validation_and_kl_weights():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(kl_scale_rule="sometimes")
    with pytest.raises(ValueError):
        TrainConfig(batch_size=2.5)
    cfg = TrainConfig(kl_scale_rule="per-batch")
    # the per-batch rule charges the full KL exactly once per epoch
    assert sum(cfg.kl_weight(22, 700) for _ in range(22)) == pytest.approx(1.0)
    assert TrainConfig(kl_scale_rule="per-example").kl_weight(22, 700) == 1 / 700
    assert TrainConfig(kl_scale_rule="none").kl_weight(22, 700) == 0.0


def test_train_separable_data():
    ds = separable_2d()
    model, history = train(ModelSpec.bkan(2), ds, TrainConfig(seed=0, learning_rate=0.01, max_epochs=60))
    best = history.records[history.best_epoch - 1]
    assert best.val_acc >= 0.95
    p = predict_proba(model, ds.features)
    assert np.mean((p >= 0.5) == ds.labels) >= 0.95


def test_train_learns_base_rate():
    n = 400
    labels = np.zeros(n, dtype=int)
    labels[: int(0.3 * n)] = 1
    ds = Dataset(np.zeros((n, 3)), labels, ("a", "b", "c"))
    model, _ = train(ModelSpec.bkan(3, hidden=[7], spline=SMALL), ds, TrainConfig(seed=1, learning_rate=0.01))
    assert predict_proba(model, np.zeros(3)) == pytest.approx(0.30, abs=0.05)


def test_train_is_deterministic_and_returns_best_checkpoint():
    ds = separable_2d(n=200, seed=3)
    spec = ModelSpec.bkan(2, hidden=[5], spline=SMALL)
    cfg = TrainConfig(seed=4, max_epochs=15, patience=3)
    m1, h1 = train(spec, ds, cfg)
    m2, h2 = train(spec, ds, cfg)
    assert h1.to_csv() == h2.to_csv()
    np.testing.assert_array_equal(m1.mu, m2.mu)
    np.testing.assert_array_equal(m1.rho, m2.rho)
    vals = [r.val_nll for r in h1.records]
    assert h1.best_epoch == int(np.argmin(vals)) + 1
    assert len(h1.records) <= 15
    # the returned model is the best checkpoint, not the last epoch
    cfg_short = replace(cfg, max_epochs=h1.best_epoch, patience=10**6)
    m3, _ = train(spec, ds, cfg_short)
    np.testing.assert_array_equal(m1.mu, m3.mu)


def test_early_stopping_patience():
    ds = separable_2d(n=200, seed=5)
    spec = ModelSpec.bkan(2, hidden=[5], spline=SMALL)
    _, history = train(spec, ds, TrainConfig(seed=0, max_epochs=200, patience=2, learning_rate=0.05, min_delta=0.5))
    # with a huge min_delta nothing after epoch 1 counts as progress
    assert len(history.records) == 3


def test_history_csv_header():
    ds = separable_2d(n=100, seed=1)
    _, history = train(ModelSpec.bkan(2, hidden=[3], spline=SMALL), ds, TrainConfig(max_epochs=2))
    lines = history.to_csv().splitlines()
    assert lines[0] == "epoch,train_loss,train_nll,train_kl,val_nll,val_acc"
    assert len(lines) == 3


def test_train_rejects_bad_input():
    ds = Dataset(np.zeros((10, 2)), np.zeros(10, dtype=int), ("a", "b"))
    with pytest.raises(ValueError):
        train(ModelSpec.bkan(2), ds, TrainConfig())
    with pytest.raises(ValueError):
        train(ModelSpec.bkan(3), separable_2d(n=50), TrainConfig())
