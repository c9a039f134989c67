import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from naed.dataio import write_checkpoint
from naed.dictionary import fourier, polynomial
from naed.model import (
    Parameters, initialize, log_softmax, loss, param_count, predict, predict_batch, softmax,
)
from naed.signal import TimeSeries, one_hot


def _zero(spec, n=1, C=2):
    return Parameters(np.zeros((spec.m, spec.d)), np.zeros((spec.m, n)),
                      np.zeros((C, spec.m)), np.zeros(C))


def _series(label, C=2, sid="a"):
    t = np.linspace(0, 10, 11)
    return TimeSeries(sid, t, np.sin(t), one_hot(label, C))


def test_param_count_examples():
    assert param_count(polynomial(2, 1), 1, 2) == 14
    assert param_count(fourier(2, 2), 1, 2) == 58
    assert param_count(fourier(3, 1), 1, 2) == 92


def test_initialize_ranges_and_determinism():
    p = initialize(polynomial(2, 2), 1, 2, seed=4)
    assert np.abs(p.beta).max() <= 0.1 and np.abs(p.B).max() <= 0.1
    q = initialize(polynomial(2, 2), 1, 2, seed=4)
    assert all(np.array_equal(a, b) for a, b in zip(p.blocks().values(), q.blocks().values()))
    f = initialize(fourier(2, 1), 1, 2, seed=1)
    assert np.abs(f.beta).max() <= 1 and f.b.min() >= 0


def test_fourier_init_mean():
    spec = fourier(1, 1)
    draws = np.concatenate([initialize(spec, 1, 2, seed=s).beta.ravel() for s in range(34000)])
    assert draws.size >= 1e5
    assert abs(draws.mean()) < 0.01


def test_uniform_prediction_at_zero():
    spec = polynomial(2, 1)
    pr = predict(_zero(spec), spec, _series(0))
    assert np.allclose(pr.probabilities, [0.5, 0.5], atol=0)
    assert pr.label == 0  # ties go to the lowest index


def test_softmax_closed_form_and_shift():
    assert np.allclose(softmax([math.log(3), 0.0]), [0.75, 0.25], rtol=1e-15)


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=6), st.floats(-100, 100))
def test_softmax_translation_invariance(z, c):
    z = np.array(z)
    assert np.abs(softmax(z + c) - softmax(z)).max() < 1e-14


def test_loss_examples():
    spec = polynomial(2, 1)
    p = _zero(spec)
    assert loss(p, spec, [_series(0)]) == pytest.approx(math.log(2), rel=1e-14)
    big = p.copy()
    big.b[:] = [50.0, 0.0]
    assert loss(big, spec, [_series(0)]) < 1e-20
    a = loss(big, spec, [_series(0, sid="x")])
    b = loss(big, spec, [_series(1, sid="y")])
    both = loss(big, spec, [_series(0, sid="x"), _series(1, sid="y")])
    assert both == pytest.approx((a + b) / 2, rel=1e-14)
    assert np.allclose(log_softmax([1000.0, 0.0]), [0.0, -1000.0])


def test_loss_needs_labels():
    spec = polynomial(2, 1)
    t = np.linspace(0, 1, 3)
    with pytest.raises(ValueError):
        loss(_zero(spec), spec, [TimeSeries("u", t, t)])


def test_batch_predictions_group_grids():
    spec = fourier(2, 1)
    p = initialize(spec, 1, 2, seed=0)
    a = _series(0, sid="a")
    b = TimeSeries("b", np.linspace(0, 8, 9), np.cos(np.linspace(0, 8, 9)), one_hot(1, 2))
    probs, hT, _ = predict_batch(p, spec, [a, b])
    assert np.allclose(probs[1], predict(p, spec, b).probabilities, rtol=1e-14)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["poly", "fourier"]), st.integers(1, 3), st.integers(1, 3),
       st.integers(1, 2), st.integers(2, 4))
def test_param_count_matches_checkpoint(tmp_path_factory, kind, m, deg, n, C):
    spec = polynomial(m, deg) if kind == "poly" else fourier(m, deg)
    p = initialize(spec, n, C, seed=0)
    path = tmp_path_factory.mktemp("ck") / "c.json"
    write_checkpoint(p, spec, path)
    doc = json.loads(path.read_text())
    scalars = sum(np.asarray(doc[k]).size for k in ("beta", "B", "A", "b"))
    assert scalars == param_count(spec, n, C) == p.size


def test_parameters_validate_shapes():
    spec = polynomial(2, 1)
    p = _zero(spec)
    with pytest.raises(ValueError):
        p.check(fourier(2, 1))
    assert np.array_equal(p.with_flat(p.flat() + 1).b, [1.0, 1.0])
