"""Synthetic labeled datasets built from forced dynamical systems.

Each generator draws random forcing coefficients, integrates the ground-truth
system with its own reference solver (RK4 on the analytic forcing, several
times finer than the training grid; the diffusion PDE uses its explicit
scheme), labels the sample from the final state, and records the forcing on a
uniform sample grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .signal import Dataset, TimeSeries, one_hot

__all__ = [
    "GeneratorConfig",
    "GenerationFailure",
    "generate",
    "add_noise",
    "SYSTEMS",
    "DEFAULT_PARAMS",
    "oscillator_rhs",
    "van_der_pol_rhs",
    "lorenz_rhs",
    "lotka_volterra_rhs",
    "reference_rk4",
    "gated_diffusion",
    "switching_signal",
]

SYSTEMS = ("oscillator", "vanderpol", "lorenz", "lotkavolterra", "diffusion")

DEFAULT_PARAMS = {
    "oscillator": {"gamma": 0.2, "omega": 1.0},
    "vanderpol": {"mu": 0.3},
    "lorenz": {"sigma": 5.0, "rho": 10.0, "beta": 1.3, "scale": 4.0},
    "lotkavolterra": {"alpha": 0.8, "beta": 0.1, "delta": 0.01, "gamma": 1.1,
                      "u1": 5.0, "u2": 4.0, "variance": 0.5},
    "diffusion": {"kappa": 0.165, "dz": 0.05, "dt": 0.01, "width": 0.1, "max_switches": 10},
}


class GenerationFailure(RuntimeError):
    pass


@dataclass
class GeneratorConfig:
    system: str = "oscillator"
    N: int = 10000
    train_fraction: float = 0.8
    seed: int = 0
    final_time: float | None = None  # 10 for the ODE systems, 1 for diffusion
    samples: int = 101
    forcing_terms: int = 2
    system_params: dict = field(default_factory=dict)
    lv_input_mode: str = "x"  # "x" or "xdot"
    lorenz_form: str = "printed"  # "printed": sigma (u2 - u3); "classical": sigma (u2 - u1)
    noise_variance: float = 0.0
    reference_substeps: int = 20

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ValueError(f"unknown system {self.system!r}; choose from {SYSTEMS}")
        if self.N <= 0:
            raise ValueError("N must be positive")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.final_time is None:
            self.final_time = 1.0 if self.system == "diffusion" else 10.0
        if self.final_time <= 0:
            raise ValueError("final_time must be positive")
        if self.samples < 2:
            raise ValueError("need at least two samples")
        if self.lv_input_mode not in ("x", "xdot"):
            raise ValueError("lv_input_mode must be 'x' or 'xdot'")
        if self.lorenz_form not in ("printed", "classical"):
            raise ValueError("lorenz_form must be 'printed' or 'classical'")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")
        unknown = set(self.system_params) - set(DEFAULT_PARAMS[self.system])
        if unknown:
            raise ValueError(f"unknown parameters for {self.system}: {sorted(unknown)}")

    @property
    def params(self) -> dict:
        return {**DEFAULT_PARAMS[self.system], **self.system_params}


# ----------------------------------------------------------------- forcing

def sine_forcing(t, amps, freqs):
    """sum_k A_k sin(alpha_k t) for a batch; t scalar or (G,) -> (N,) or (N, G)."""
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        return np.sum(amps * np.sin(freqs * t), axis=1)
    return np.einsum("nk,nkg->ng", amps, np.sin(freqs[:, :, None] * t[None, None, :]))


def sine_forcing_dot(t, amps, freqs):
    t = np.asarray(t, dtype=float)
    return np.einsum("nk,nkg->ng", amps * freqs, np.cos(freqs[:, :, None] * t[None, None, :]))


# ----------------------------------------------------------------- systems

def oscillator_rhs(p):
    g, w2 = p["gamma"], p["omega"] ** 2

    def f(t, u, x):
        return np.stack([u[:, 1], x - g * u[:, 1] - w2 * u[:, 0]], axis=1)

    return f


def van_der_pol_rhs(p):
    mu = p["mu"]

    def f(t, u, x):
        return np.stack([u[:, 1], x + mu * (1 - u[:, 0] ** 2) * u[:, 1] - u[:, 0]], axis=1)

    return f


def lorenz_rhs(p, form="printed"):
    s, r, b = p["sigma"], p["rho"], p["beta"]
    other = 2 if form == "printed" else 0

    def f(t, u, x):
        return np.stack([
            s * (u[:, 1] - u[:, other]) + x,
            u[:, 0] * (r - u[:, 2]) - u[:, 1],
            u[:, 0] * u[:, 1] - b * u[:, 2],
        ], axis=1)

    return f


def lotka_volterra_rhs(p):
    a, be, de, ga = p["alpha"], p["beta"], p["delta"], p["gamma"]

    def f(t, u, x):
        prod = x * u[:, 0] * u[:, 1]
        return np.stack([a * u[:, 0] - be * prod, de * prod - ga * u[:, 1]], axis=1)

    return f


def reference_rk4(rhs, u0, forcing, final_time, steps):
    """RK4 with ``steps`` uniform steps; ``forcing(t)`` returns (N,) values.

    Returns the final state (N, dim).
    """
    u = np.array(u0, dtype=float)
    dt = final_time / steps
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(steps):
            t = i * dt
            xa, xm, xb = forcing(t), forcing(t + 0.5 * dt), forcing(t + dt)
            k1 = rhs(t, u, xa)
            k2 = rhs(t + 0.5 * dt, u + 0.5 * dt * k1, xm)
            k3 = rhs(t + 0.5 * dt, u + 0.5 * dt * k2, xm)
            k4 = rhs(t + dt, u + dt * k3, xb)
            u = u + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return u


# ----------------------------------------------------------------- diffusion

def switching_signal(switch_times, t):
    """0/1 signal starting at 0 and toggling at each switch time."""
    t = np.asarray(t, dtype=float)
    return (np.searchsorted(np.sort(switch_times), t, side="right") % 2).astype(float)


def gated_diffusion(gate, p=None, return_history=False):
    """Explicit scheme for u_t = kappa u_zz on [0, 1].

    ``gate`` holds x(t_n) on the time grid t_n = n dt (length steps + 1).
    Reflecting (ghost node) boundary at z=0; at z=1 the boundary is absorbing
    (u=0) while the gate is 1 and reflecting while it is 0.  The boundary of
    step n -> n+1 follows x(t_n).  Returns the survival S(t) = int u dz at
    every time level (trapezoid rule, which the reflecting stencil conserves
    exactly).

    Forward Euler with central differences is only stable for
    kappa dt / dz^2 <= 1/2, so each step of length dt is split into the
    fewest equal substeps that meet that bound.
    """
    p = {**DEFAULT_PARAMS["diffusion"], **(p or {})}
    kappa, dz, dt, width = p["kappa"], p["dz"], p["dt"], p["width"]
    cfl = kappa * dt / dz ** 2
    if not cfl < 1:
        raise GenerationFailure(f"CFL number {cfl:.3f} violates kappa dt / dz^2 < 1")
    sub = max(1, int(np.ceil(2 * cfl)))
    r = cfl / sub
    assert r <= 0.5
    gate = np.asarray(gate, dtype=float)
    nz = int(round(1.0 / dz)) + 1
    z = np.linspace(0.0, 1.0, nz)
    u = np.exp(-((z - 0.5) ** 2) / (2 * width ** 2)) / np.sqrt(2 * np.pi * width ** 2)
    w = np.full(nz, dz)
    w[0] = w[-1] = 0.5 * dz
    surv = np.empty(len(gate))
    history = [u.copy()] if return_history else None
    lap = np.empty_like(u)
    for n in range(len(gate) - 1):
        absorbing = gate[n] >= 0.5
        if absorbing:
            u[-1] = 0.0
        surv[n] = w @ u
        for _ in range(sub):
            lap[1:-1] = u[2:] - 2 * u[1:-1] + u[:-2]
            lap[0] = 2 * (u[1] - u[0])
            lap[-1] = 2 * (u[-2] - u[-1])
            u = u + r * lap
            if absorbing:
                u[-1] = 0.0
        if return_history:
            history.append(u.copy())
    if gate[-1] >= 0.5:
        u[-1] = 0.0
    surv[-1] = w @ u
    if return_history:
        return surv, np.array(history)
    return surv


# ----------------------------------------------------------------- driver

def _split(series, cfg, meta, n):
    rng = np.random.default_rng([cfg.seed, 1])
    order = rng.permutation(len(series))
    n_train = int(round(cfg.train_fraction * len(series)))
    train = Dataset([series[i] for i in order[:n_train]], n, 2, dict(meta, split="train"))
    test = Dataset([series[i] for i in order[n_train:]], n, 2, dict(meta, split="test"))
    return train, test


def _ode_system(cfg):
    p = cfg.params
    N, K = cfg.N, cfg.forcing_terms
    rng = np.random.default_rng(cfg.seed)
    if cfg.system == "lotkavolterra":
        sd = np.sqrt(p["variance"])
        amps = rng.normal(0.0, sd, (N, K))
        freqs = rng.normal(0.0, sd, (N, K))
    else:
        amps = rng.normal(0.0, 1.0, (N, K))
        freqs = rng.normal(0.0, 1.0, (N, K))
    scale = p.get("scale", 1.0)

    if cfg.system == "oscillator":
        rhs, u0 = oscillator_rhs(p), np.zeros((N, 2))
        forcing = lambda t: scale * sine_forcing(t, amps, freqs)
    elif cfg.system == "vanderpol":
        rhs, u0 = van_der_pol_rhs(p), np.zeros((N, 2))
        forcing = lambda t: sine_forcing(t, amps, freqs)
    elif cfg.system == "lorenz":
        rhs, u0 = lorenz_rhs(p, cfg.lorenz_form), np.ones((N, 3))
        forcing = lambda t: scale * sine_forcing(t, amps, freqs)
    else:
        rhs = lotka_volterra_rhs(p)
        u0 = np.tile([p["u1"], p["u2"]], (N, 1))
        forcing = lambda t: sine_forcing(t, amps, freqs) ** 2

    steps = (cfg.samples - 1) * cfg.reference_substeps
    uT = reference_rk4(rhs, u0, forcing, cfg.final_time, steps)
    bad = ~np.all(np.isfinite(uT), axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise GenerationFailure(f"{cfg.system}: reference solve blew up for sample {i} (seed {cfg.seed})")

    if cfg.system == "lotkavolterra":
        labels = np.argmax(uT[:, :2], axis=1)
    else:
        # strict u(T) > 0 is class 0; an exact zero goes to class 1
        labels = np.where(uT[:, 0] > 0, 0, 1)

    t = np.linspace(0.0, cfg.final_time, cfg.samples)
    if cfg.system == "lotkavolterra" and cfg.lv_input_mode == "xdot":
        s = sine_forcing(t, amps, freqs)
        values = 2.0 * s * sine_forcing_dot(t, amps, freqs)
    elif cfg.system == "lotkavolterra":
        values = sine_forcing(t, amps, freqs) ** 2
    else:
        values = scale * sine_forcing(t, amps, freqs)
    series = [
        TimeSeries(f"{cfg.system}-{i:05d}", t, values[i][:, None], one_hot(int(labels[i]), 2),
                   {"A": amps[i].tolist(), "alpha": freqs[i].tolist()})
        for i in range(N)
    ]
    return series


def _diffusion_system(cfg):
    p = cfg.params
    rng = np.random.default_rng(cfg.seed)
    steps = int(round(cfg.final_time / p["dt"]))
    tgrid = np.linspace(0.0, cfg.final_time, steps + 1)
    t = np.linspace(0.0, cfg.final_time, cfg.samples)
    series = []
    for i in range(cfg.N):
        q = int(rng.integers(0, p["max_switches"] + 1))
        switches = np.sort(rng.uniform(0.0, cfg.final_time, q))
        surv = gated_diffusion(switching_signal(switches, tgrid), p)
        label = 0 if surv[-1] < 0.5 else 1
        series.append(TimeSeries(f"diffusion-{i:05d}", t, switching_signal(switches, t)[:, None],
                                 one_hot(label, 2),
                                 {"switches": switches.tolist(), "survival": float(surv[-1])}))
    return series


def generate(config: GeneratorConfig):
    """Build (train, test) datasets for ``config``."""
    if config.system == "diffusion":
        series = _diffusion_system(config)
    else:
        series = _ode_system(config)
    meta = {"system": config.system, "seed": str(config.seed), "final_time": repr(config.final_time)}
    if config.system == "lotkavolterra":
        meta["input"] = config.lv_input_mode
    if config.system == "lorenz":
        meta["lorenz_form"] = config.lorenz_form
    train, test = _split(series, config, meta, 1)
    if config.noise_variance > 0:
        train = add_noise(train, config.noise_variance, seed=[config.seed, 2])
        test = add_noise(test, config.noise_variance, seed=[config.seed, 3])
    return train, test


def add_noise(dataset: Dataset, variance: float, seed=None) -> Dataset:
    """Add iid N(0, variance) noise to every sampled value."""
    if variance < 0:
        raise ValueError("variance must be >= 0")
    if variance == 0:
        return Dataset(list(dataset.series), dataset.n, dataset.num_classes, dict(dataset.metadata))
    rng = np.random.default_rng(seed)
    sd = np.sqrt(variance)
    noisy = [ts.with_values(ts.values + rng.normal(0.0, sd, ts.values.shape)) for ts in dataset]
    meta = dict(dataset.metadata, noise_variance=repr(variance))
    return Dataset(noisy, dataset.n, dataset.num_classes, meta)
