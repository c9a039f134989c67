import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from naed.dictionary import fourier, polynomial
from naed.model import Parameters, initialize
from naed.signal import TimeSeries
from naed.stability import (
    deterministic_perturbations, l1_norm, stability_check, stability_constant,
)


def _base(T=10.0, k=21):
    t = np.linspace(0, T, k)
    return TimeSeries("base", t, np.sin(t))


def test_constant_formula():
    spec = fourier(2, 1, 10.0)
    p = initialize(spec, 1, 2, seed=0)
    c = stability_constant(p, spec, 10.0)
    want = (np.linalg.norm(p.A, 2) * np.linalg.norm(p.B, 2)
            * np.exp(c["lip_dictionary"] * 10.0 * np.linalg.norm(p.beta, 2)))
    assert c["L"] == pytest.approx(want, rel=1e-14)


def test_l1_norm_exact_cases():
    t = np.linspace(0, 2, 5)
    const = np.full((1, 5, 1), -3.0)
    assert l1_norm(t, const)[0] == pytest.approx(6.0, rel=1e-14)
    ramp = (t - 1.0)[None, :, None]  # |t - 1| integrates to 1 on [0, 2]
    assert l1_norm(t, ramp)[0] == pytest.approx(1.0, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_l1_norm_never_overestimates(seed):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(0, 5, 6))
    t[0] = 0.0
    eta = rng.normal(size=(1, 6, 2))
    fine = np.linspace(0, t[-1], 200001)
    vals = np.stack([np.interp(fine, t, eta[0, :, j]) for j in range(2)], axis=1)
    mags = np.linalg.norm(vals, axis=1)
    exact = np.sum(0.5 * (mags[1:] + mags[:-1]) * np.diff(fine))
    est = l1_norm(t, eta)[0]
    assert est <= exact + 1e-9 and est >= 0.999 * exact


def test_perturbation_families():
    rng = np.random.default_rng(0)
    eta = deterministic_perturbations(np.linspace(0, 10, 11), 2, 300, rng)
    assert eta.shape == (300, 11, 2)
    amp = np.abs(eta).max(axis=(1, 2))
    assert amp.max() <= 10 ** 0.5 * 5 and amp.min() > 0


@pytest.mark.parametrize("spec", [polynomial(2, 1), fourier(2, 1)])
def test_small_check_has_no_violations(spec):
    p = initialize(spec, 1, 2, seed=1)
    p = Parameters(0.2 * p.beta, p.B, p.A, p.b)
    rep = stability_check(p, spec, _base(), n_perturbations=300, n_paths=300, seed=0)
    assert rep.det_violations == 0 and rep.wiener_path_violations == 0
    assert rep.tail_empirical <= rep.tail_bound
    assert rep.passed and "violations" in rep.summary()
    assert rep.to_dict()["passed"] is True


def test_quadratic_dictionary_uses_visited_radius():
    spec = polynomial(2, 2)
    p = initialize(spec, 1, 2, seed=0)
    rep = stability_check(p, spec, _base(), n_perturbations=100, n_paths=100, seed=1)
    assert rep.domain_radius > 0 and rep.passed
