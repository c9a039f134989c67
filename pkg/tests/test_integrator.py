import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from naed.dictionary import fourier, polynomial
from naed.integrator import BlowUp, fine_grid, quadrature, solve_adjoint, solve_forward
from naed.model import Parameters
from naed.signal import TimeSeries
from oracles import linear_forced_exact, oscillator_closed_form, oscillator_params


def _params(beta, B, classes=2):
    m = beta.shape[0]
    return Parameters(beta, B, np.zeros((classes, m)), np.zeros(classes))


def test_zero_field_stays_at_origin():
    spec = fourier(2, 1)
    ts = TimeSeries("a", np.linspace(0, 10, 11), np.random.default_rng(0).normal(size=(11, 1)))
    tr = solve_forward(_params(np.zeros((2, 9)), np.zeros((2, 1))), spec, ts, 4)
    assert np.all(tr.states == 0)


def test_constant_forcing_is_integrated_exactly():
    spec = polynomial(2, 1)
    t = np.linspace(0, 10, 11)
    c = np.array([0.7, -1.3])
    ts = TimeSeries("a", t, np.tile(c, (11, 1)))
    tr = solve_forward(_params(np.zeros((2, 3)), np.eye(2)), spec, ts, 3)
    assert np.allclose(tr.final, c * 10, rtol=1e-12, atol=0)


def test_oscillator_matches_closed_form():
    beta, B = oscillator_params(0.2, 1.0)
    t = np.linspace(0, 10, 101)
    ts = TimeSeries("a", t, np.sin(t))
    tr = solve_forward(_params(beta, B), polynomial(2, 1), ts, 8)
    # the model sees the piecewise-linear interpolant; compare against both
    exact_pl = linear_forced_exact(beta[:, 1:], beta[:, 0], B, t, np.sin(t))[-1]
    assert np.abs(tr.final - exact_pl).max() < 1e-6
    # finely sampled forcing: interpolation error O(dt^2) drops below 1e-6
    tf = np.linspace(0, 10, 10001)
    fine = solve_forward(_params(beta, B), polynomial(2, 1), TimeSeries("b", tf, np.sin(tf)), 1)
    assert abs(fine.final[0] - oscillator_closed_form(10.0, 0.2, 1.0, [1.0], [1.0])) < 1e-6


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 2))
def test_linear_model_matches_matrix_exponential(seed, m, n):
    rng = np.random.default_rng(seed)
    spec = polynomial(m, 1)
    beta = rng.uniform(-0.5, 0.5, (m, spec.d))
    B = rng.uniform(-1, 1, (m, n))
    t = np.concatenate([[0.0], np.cumsum(rng.uniform(0.05, 0.2, 30))])
    x = rng.normal(size=(31, n))
    tr = solve_forward(_params(beta, B), spec, TimeSeries("a", t, x), 8)
    exact = linear_forced_exact(beta[:, 1:], beta[:, 0], B, t, x)
    # states on the fine grid: every 8th node is a sample time
    assert np.abs(tr.states[::8] - exact).max() < 1e-8 * max(1.0, np.abs(exact).max())


def test_blowup_detected():
    spec = polynomial(1, 2)
    beta = np.array([[1.0, 0.0, 4.0]])  # h' = 1 + 2 h^2 escapes before t = 1
    ts = TimeSeries("a", np.linspace(0, 5, 51), np.zeros(51))
    with pytest.raises(BlowUp) as info:
        solve_forward(_params(beta, np.zeros((1, 1))), spec, ts, 4)
    assert info.value.t <= 5.0


def test_adjoint_zero_field_constant():
    spec = fourier(2, 1)
    ts = TimeSeries("a", np.linspace(0, 10, 11), np.ones(11))
    p = _params(np.zeros((2, 9)), np.ones((2, 1)))
    fwd = solve_forward(p, spec, ts, 2)
    lam = solve_adjoint(p, spec, fwd, [0.3, -0.2])
    assert np.all(lam.states == np.array([0.3, -0.2]))


@pytest.mark.parametrize("scheme", ["rk4", "trapezoid"])
def test_adjoint_linear_matches_exponential(scheme):
    rng = np.random.default_rng(3)
    spec = polynomial(2, 1)
    beta = rng.uniform(-0.5, 0.5, (2, 3))
    p = _params(beta, rng.uniform(-1, 1, (2, 1)))
    t = np.linspace(0, 10, 101)
    fwd = solve_forward(p, spec, TimeSeries("a", t, np.sin(t)), 4)
    term = np.array([1.0, -0.5])
    lam = solve_adjoint(p, spec, fwd, term, scheme=scheme)
    J = beta[:, 1:]
    T = 10.0
    want = np.array([expm(-J.T * (s - T)) @ term for s in fwd.grid.times])
    assert np.abs(lam.states - want).max() < 1e-8


def test_adjoint_scalar_exponential():
    a = -0.3
    spec = polynomial(1, 1)
    p = _params(np.array([[0.1, a]]), np.ones((1, 1)))
    t = np.linspace(0, 10, 101)
    fwd = solve_forward(p, spec, TimeSeries("a", t, np.cos(t)), 4)
    lam = solve_adjoint(p, spec, fwd, [2.0])
    assert lam.states[0, 0] == pytest.approx(np.exp(a * 10) * 2.0, rel=1e-9)


def test_quadrature_examples():
    t = np.linspace(0, 10, 11)
    assert quadrature(t, np.ones(11)) == pytest.approx(10.0)
    assert quadrature(t, t) == pytest.approx(50.0, rel=1e-15)
    s = np.linspace(0, 1, 101)
    assert abs(quadrature(s, s ** 2) - 1 / 3) < 2e-5


def test_fine_grid_contains_sample_times():
    t = np.array([0.0, 0.5, 2.0])
    g = fine_grid(t, 4)
    assert len(g.times) == 9
    assert np.array_equal(g.times[::4], t)
    with pytest.raises(ValueError):
        fine_grid(t, 0)


def test_rk4_order():
    beta, B = oscillator_params(0.2, 1.0)
    t = np.linspace(0, 10, 11)
    ts = TimeSeries("a", t, np.zeros(11))
    # a nonzero start is emulated by a constant drive; use the linear-exact oracle
    x = 0.5 * t  # piecewise-linear forcing is exactly representable
    ts = TimeSeries("a", t, x)
    exact = linear_forced_exact(beta[:, 1:], beta[:, 0], B, t, x)[-1]
    errs = [np.abs(solve_forward(_params(beta, B), polynomial(2, 1), ts, s).final - exact).max()
            for s in (1, 2, 4, 8)]
    ratios = [errs[i] / errs[i + 1] for i in range(3)]
    assert min(ratios) >= 15, ratios
