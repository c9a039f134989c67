import numpy as np
import pytest

from naed.datagen import (
    DEFAULT_PARAMS, GenerationFailure, GeneratorConfig, add_noise, gated_diffusion, generate,
    oscillator_rhs, reference_rk4, switching_signal,
)
from naed.signal import Dataset, TimeSeries, one_hot
from oracles import oscillator_closed_form


def test_reference_solver_matches_closed_form():
    rng = np.random.default_rng(0)
    amps = rng.normal(size=(5, 2))
    freqs = rng.normal(size=(5, 2))
    from naed.datagen import sine_forcing
    uT = reference_rk4(oscillator_rhs(DEFAULT_PARAMS["oscillator"]), np.zeros((5, 2)),
                       lambda t: sine_forcing(t, amps, freqs), 10.0, 2000)
    for i in range(5):
        want = oscillator_closed_form(10.0, 0.2, 1.0, amps[i], freqs[i])
        assert abs(uT[i, 0] - want) < 1e-8


def test_zero_forcing_oscillator_goes_to_class_one():
    cfg = GeneratorConfig("oscillator", N=4, seed=0)
    uT = reference_rk4(oscillator_rhs(cfg.params), np.zeros((1, 2)), lambda t: np.zeros(1), 10.0, 100)
    assert uT[0, 0] == 0.0
    assert np.where(uT[:, 0] > 0, 0, 1)[0] == 1


def test_generate_oscillator_shapes_and_determinism():
    cfg = GeneratorConfig("oscillator", N=50, seed=3)
    tr, te = generate(cfg)
    assert len(tr) == 40 and len(te) == 10
    assert tr.n == 1 and tr.num_classes == 2
    ts = tr.series[0]
    assert len(ts.times) == 101 and ts.final_time == 10.0
    assert set(ts.meta) == {"A", "alpha"}
    tr2, _ = generate(cfg)
    assert np.array_equal(tr.labels(), tr2.labels())
    assert all(np.array_equal(a.values, b.values) for a, b in zip(tr, tr2))


def test_labels_follow_final_position():
    tr, _ = generate(GeneratorConfig("oscillator", N=20, seed=1))
    from naed.datagen import sine_forcing
    for ts in tr:
        amps, freqs = np.array([ts.meta["A"]]), np.array([ts.meta["alpha"]])
        u = oscillator_closed_form(10.0, 0.2, 1.0, amps[0], freqs[0])
        assert ts.label_index == (0 if u > 0 else 1)
        assert np.allclose(ts.values[:, 0], sine_forcing(ts.times, amps, freqs)[0])


@pytest.mark.parametrize("system", ["vanderpol", "lorenz", "lotkavolterra"])
def test_other_systems_generate(system):
    tr, te = generate(GeneratorConfig(system, N=20, seed=0))
    assert len(tr) + len(te) == 20
    assert all(np.isfinite(ts.values).all() for ts in tr)


def test_lotka_volterra_xdot_mode_is_derivative():
    tr, _ = generate(GeneratorConfig("lotkavolterra", N=5, seed=2, lv_input_mode="xdot"))
    trx, _ = generate(GeneratorConfig("lotkavolterra", N=5, seed=2))
    for a, b in zip(tr, trx):
        num = np.gradient(b.values[:, 0], b.times)
        assert np.abs(a.values[1:-1, 0] - num[1:-1]).max() < 0.05 * max(1.0, np.abs(num).max())
        assert a.label_index == b.label_index


def test_diffusion_zero_switching_conserves_mass():
    surv = gated_diffusion(np.zeros(101))
    assert np.abs(surv - surv[0]).max() < 1e-10
    assert surv[-1] > 0.5  # label (0,1)


def test_diffusion_absorbing_gate_loses_mass():
    surv = gated_diffusion(np.ones(101))
    assert np.all(np.diff(surv) <= 1e-15) and surv[-1] < surv[0]


def test_default_scheme_is_stable():
    surv, hist = gated_diffusion(np.ones(101), return_history=True)
    assert np.all(np.isfinite(hist)) and hist.min() >= 0
    assert 0 < surv[-1] < 1


def test_cfl_violation_raises():
    with pytest.raises(GenerationFailure):
        gated_diffusion(np.zeros(11), {"dt": 0.02})


def test_switching_signal():
    sig = switching_signal([0.25, 0.5], np.array([0.0, 0.3, 0.6]))
    assert sig.tolist() == [0.0, 1.0, 0.0]


def test_diffusion_dataset():
    tr, te = generate(GeneratorConfig("diffusion", N=20, seed=0))
    for ts in list(tr) + list(te):
        assert ts.final_time == 1.0
        assert set(np.unique(ts.values)) <= {0.0, 1.0}
        assert ts.label_index == (0 if ts.meta["survival"] < 0.5 else 1)


def test_add_noise_statistics():
    t = np.linspace(0, 1, 1001)
    ds = Dataset([TimeSeries(f"s{i}", t, np.zeros(1001), one_hot(0, 2)) for i in range(1000)], 1, 2)
    same = add_noise(ds, 0.0, seed=0)
    assert all(np.array_equal(a.values, b.values) for a, b in zip(ds, same))
    noisy = add_noise(ds, 1e-4, seed=0)
    eta = np.concatenate([ts.values.ravel() for ts in noisy])
    assert eta.size >= 1e6
    assert 0.9e-4 <= eta.var() <= 1.1e-4
    assert abs(eta.mean()) < 5e-4
    with pytest.raises(ValueError):
        add_noise(ds, -1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        GeneratorConfig("pendulum")
    with pytest.raises(ValueError):
        GeneratorConfig("oscillator", train_fraction=1.0)
    with pytest.raises(ValueError):
        GeneratorConfig("oscillator", system_params={"mu": 1.0})
