import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from naed.dictionary import fourier, polynomial
from naed.gradients import Gradients
from naed.model import Parameters, initialize
from naed.signal import TimeSeries, one_hot
from naed.trainer import (
    AdamState, TrainConfig, adam_step, cross_validate_lambda, evaluate, stratified_folds,
    threshold_beta, train,
)


def _toy(N=60, seed=0, T=5.0):
    """Class 0 when the integral of x is positive: separable through h(T)."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0, T, 11)
    out = []
    for i in range(N):
        c = rng.choice([-1.0, 1.0]) * rng.uniform(0.2, 1.0)
        x = c + 0.2 * np.sin(rng.uniform(0.5, 2) * t)
        out.append(TimeSeries(f"s{i}", t, x, one_hot(0 if c > 0 else 1, 2)))
    return out


def _scalar(theta):
    return Parameters(np.array([[theta]]), np.zeros((1, 1)), np.zeros((1, 1)), np.zeros(1))


def _grads(g):
    return Gradients(np.array([[g]]), np.zeros((1, 1)), np.zeros((1, 1)), np.zeros(1))


def test_adam_zero_gradient_fixed_point():
    p = _scalar(1.5)
    q, _ = adam_step(AdamState.zeros_like(p), p, _grads(0.0), TrainConfig(learning_rate=0.1))
    assert q.beta[0, 0] == 1.5


@given(st.floats(-1e3, 1e3).filter(lambda g: abs(g) > 1e-6), st.floats(1e-4, 1.0))
def test_adam_first_step_is_sign_sized(g, lr):
    p = _scalar(0.0)
    q, _ = adam_step(AdamState.zeros_like(p), p, _grads(g), TrainConfig(learning_rate=lr))
    step = q.beta[0, 0]
    assert np.sign(step) == -np.sign(g)
    assert abs(step) <= lr * (1 + 1e-8) and abs(step) > 0.99 * lr


def _adam_reference(theta, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    out = []
    for t in range(1, steps + 1):
        g = theta
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        out.append(theta)
    return out


def test_adam_scalar_quadratic_trajectory():
    p = _scalar(1.0)
    state = AdamState.zeros_like(p)
    cfg = TrainConfig(learning_rate=0.1)
    got = []
    for _ in range(50):
        p, state = adam_step(state, p, _grads(p.beta[0, 0]), cfg)
        got.append(p.beta[0, 0])
    assert np.allclose(got, _adam_reference(1.0, 0.1, 50), rtol=1e-13, atol=1e-15)
    loss = 0.5 * np.array([1.0] + got) ** 2
    # momentum overshoots zero after 11 steps; the loss falls strictly until then
    assert np.all(np.diff(loss[:12]) < 0)
    assert loss[-1] < 1e-4


def test_threshold_beta():
    p = _scalar(0.05)
    assert threshold_beta(p, 0.1).beta[0, 0] == 0
    assert threshold_beta(p, 0.01).beta[0, 0] == 0.05
    assert threshold_beta(p, 0).beta[0, 0] == 0.05


def test_separable_toy_reaches_full_accuracy():
    data = _toy()
    spec = polynomial(2, 1)
    params, rep = train(data, spec, TrainConfig(learning_rate=0.05, max_epochs=200, seed=0))
    assert rep.train_accuracy == 1.0
    assert rep.nonzero_beta_count == spec.m * spec.d
    assert evaluate(params, spec, data) == 1.0


def test_training_is_deterministic():
    data = _toy(30)
    cfg = TrainConfig(learning_rate=0.05, max_epochs=15, seed=3)
    _, r1 = train(data, fourier(2, 1), cfg)
    _, r2 = train(data, fourier(2, 1), cfg)
    assert r1.loss_history == r2.loss_history


def test_minibatch_training_runs():
    data = _toy(40)
    _, rep = train(data, polynomial(2, 1), TrainConfig(learning_rate=0.05, max_epochs=5,
                                                       batch_size=8, seed=1))
    assert rep.epochs == 5 and len(rep.epoch_log) == 5


@settings(max_examples=8, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.floats(0.01, 0.6), st.integers(0, 1000))
def test_threshold_invariant_after_every_step(lam, seed):
    data = _toy(20, seed=seed)
    seen = []

    def check(epoch, params):
        mags = np.abs(params.beta)
        seen.append(bool(np.all((mags == 0) | (mags >= lam))))

    _, rep = train(data, fourier(2, 1), TrainConfig(learning_rate=0.05, max_epochs=10,
                                                    sparse_lambda=lam, seed=seed), on_step=check)
    assert seen and all(seen)
    assert rep.nonzero_beta_count <= 18


def test_random_params_give_chance_accuracy():
    rng = np.random.default_rng(11)
    t = np.linspace(0, 10, 11)
    data = [TimeSeries(f"r{i}", t, rng.normal(size=11), one_hot(i % 2, 2)) for i in range(2000)]
    acc = evaluate(initialize(fourier(2, 1), 1, 2, seed=0), fourier(2, 1), data)
    assert abs(acc - 0.5) <= 0.05


def test_stratified_folds_contract():
    labels = np.array([0] * 23 + [1] * 9 + [2] * 4)
    folds = stratified_folds(labels, 5, seed=1)
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1
    assert sorted(i for f in folds for i in f) == list(range(36))
    for c in range(3):
        counts = [int(np.sum(labels[f] == c)) for f in folds]
        assert max(counts) - min(counts) <= 1


def test_cv_single_lambda_grid():
    res = cross_validate_lambda(_toy(10), polynomial(2, 1), TrainConfig(max_epochs=1), [0.05])
    assert res.chosen == 0.05


def test_cv_picks_from_grid():
    res = cross_validate_lambda(_toy(20), fourier(2, 1),
                                TrainConfig(learning_rate=0.05, max_epochs=5), [0.01, 0.5], k=2)
    assert res.chosen in (0.01, 0.5)
    assert res.fold_scores.shape == (2, 2)
    assert "fold1" in res.table()


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(sparse_lambda=-1)
