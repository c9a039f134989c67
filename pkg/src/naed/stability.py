"""Empirical checks of the classifier's Lipschitz stability bounds.

For a trained model the prediction map x -> softmax(A h(T) + b) satisfies

    |C(x + eta) - C(x)| <= L ||eta||_{L1}              (deterministic eta)
    |C(x + eta) - C(x)| <= L sup_s |W_s|,  eta dt = dW  (white noise)

with L = L_sigma ||B|| exp(Lip(Xi) T ||beta||), and the Gaussian tail
P(|C(x + eta) - C(x)| >= r) <= 2 d exp(-r^2 / (2 d T L^2)), d the noise
dimension.  Here L_sigma = ||A||_2: softmax is 1-Lipschitz, and the readout
contributes the operator norm of A.  The checks sample many perturbations and
count violations.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dictionary import DictionarySpec, lipschitz_vector
from .integrator import fine_grid, forward_batch, grid_forcing
from .model import Parameters, softmax

__all__ = [
    "StabilityReport",
    "stability_constant",
    "l1_norm",
    "deterministic_perturbations",
    "check_deterministic",
    "check_wiener",
    "stability_check",
]


def stability_constant(params: Parameters, spec: DictionarySpec, final_time: float,
                       domain_radius: float = 1.0) -> dict:
    """Pieces of L.  ``domain_radius`` only matters for polynomial dictionaries
    of degree >= 2, whose Lipschitz constant is local."""
    lip = lipschitz_vector(spec, domain_radius)
    nb = float(np.linalg.norm(params.beta, 2))
    nB = float(np.linalg.norm(params.B, 2))
    nA = float(np.linalg.norm(params.A, 2))
    with np.errstate(over="ignore"):
        L = nA * nB * float(np.exp(lip * final_time * nb))
    return {"L": L, "lip_dictionary": lip, "norm_beta": nb, "norm_B": nB, "norm_A": nA,
            "L_sigma": nA, "final_time": float(final_time)}


def l1_norm(times, eta, sub: int = 64) -> np.ndarray:
    """int_0^T |eta(t)| dt for piecewise-linear eta sampled at ``times``.

    ``eta`` is (P, M+1, n).  Midpoint rule with ``sub`` points per interval;
    |eta| is convex on each linear piece, so this never overestimates.
    """
    t = np.asarray(times, dtype=float)
    dt = np.diff(t)
    frac = (np.arange(sub) + 0.5) / sub
    a, b = eta[:, :-1, None, :], eta[:, 1:, None, :]
    vals = a + frac[None, None, :, None] * (b - a)
    mags = np.linalg.norm(vals, axis=-1).mean(axis=2)  # (P, M)
    return mags @ dt


def deterministic_perturbations(times, n: int, count: int, rng) -> np.ndarray:
    """Mixed families of sampled perturbations, (count, M+1, n).

    Gaussian white sequences, sinusoids, and single-node spikes, with
    amplitudes spread log-uniformly over 10^-3 .. 10^0.5.
    """
    t = np.asarray(times, dtype=float)
    M1 = len(t)
    kind = rng.integers(0, 3, count)
    amp = 10.0 ** rng.uniform(-3.0, 0.5, count)
    eta = np.empty((count, M1, n))
    g = kind == 0
    eta[g] = rng.normal(size=(int(g.sum()), M1, n))
    s = kind == 1
    k = int(s.sum())
    freq = rng.uniform(0.1, 5.0, (k, 1, n))
    phase = rng.uniform(0, 2 * np.pi, (k, 1, n))
    eta[s] = np.sin(freq * t[None, :, None] + phase)
    p = kind == 2
    k = int(p.sum())
    eta[p] = 0.0
    idx = rng.integers(0, M1, k)
    eta[np.flatnonzero(p), idx] = rng.choice([-1.0, 1.0], (k, n))
    return amp[:, None, None] * eta


def _predict_values(params, spec, times, values, substeps, guard, x_ends=None, extra=None):
    grid = fine_grid(times, substeps)
    xn, xm = grid_forcing(values, substeps)
    if extra is not None:
        # piecewise-constant additions on each fine step: (G-1, P, n)
        xe = xn[1:] + extra
        xn = xn.copy()
        xn[:-1] += extra
        xm = xm + extra
        x_ends = xe
    states, blown = forward_batch(params.beta, params.B, spec, grid, xn, xm, guard=guard,
                                  mask_blowup=True, x_ends=x_ends)
    hT = states[-1]
    return softmax(hT @ params.A.T + params.b), states, blown


@dataclass
class StabilityReport:
    L: float
    lip_dictionary: float
    norm_beta: float
    norm_B: float
    norm_A: float
    domain_radius: float
    det_count: int
    det_violations: int
    det_max_ratio: float
    det_blowups: int
    wiener_count: int
    wiener_path_violations: int
    wiener_max_ratio: float
    wiener_blowups: int
    noise_dim: int
    r: float
    tail_bound: float
    tail_empirical: float

    @property
    def passed(self) -> bool:
        return (self.det_violations == 0 and self.wiener_path_violations == 0
                and self.tail_empirical <= self.tail_bound)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def summary(self) -> str:
        return "\n".join([
            f"L = {self.L:.6g}  (||A|| {self.norm_A:.4g}, ||B|| {self.norm_B:.4g}, "
            f"||beta|| {self.norm_beta:.4g}, Lip(Xi) {self.lip_dictionary:.4g})",
            f"deterministic: {self.det_violations} violations of |dC| <= L ||eta||_L1 over "
            f"{self.det_count} perturbations (max ratio {self.det_max_ratio:.3g}, "
            f"{self.det_blowups} blow-ups)",
            f"wiener: {self.wiener_path_violations} violations of |dC| <= L sup|W| over "
            f"{self.wiener_count} paths (max ratio {self.wiener_max_ratio:.3g}, "
            f"{self.wiener_blowups} blow-ups)",
            f"tail at r = {self.r:.4g}: empirical {self.tail_empirical:.4g} <= bound {self.tail_bound:.4g}"
            f" : {'ok' if self.tail_empirical <= self.tail_bound else 'VIOLATED'}",
        ])


def check_deterministic(params, spec, base, count, rng, L, substeps=4, guard=1e6, chunk=2000):
    """Returns (violations, max ratio, blow-ups, max |h|) over ``count`` draws."""
    times, x = base.times, base.values
    clean, states0, _ = _predict_values(params, spec, times, x[None], substeps, guard)
    radius = float(np.abs(states0).max())
    violations, max_ratio, blowups = 0, 0.0, 0
    done = 0
    while done < count:
        k = min(chunk, count - done)
        eta = deterministic_perturbations(times, base.n, k, rng)
        probs, states, blown = _predict_values(params, spec, times, x[None] + eta, substeps, guard)
        radius = max(radius, float(np.abs(states[:, ~blown]).max(initial=0.0)))
        diff = np.linalg.norm(probs - clean, axis=1)
        bound = L * l1_norm(times, eta)
        ok = ~blown
        ratio = np.where(bound > 0, diff / np.where(bound > 0, bound, 1.0), 0.0)
        violations += int(np.sum(ok & (diff > bound)))
        if ok.any():
            max_ratio = max(max_ratio, float(ratio[ok].max()))
        blowups += int(blown.sum())
        done += k
    return violations, max_ratio, blowups, radius


def check_wiener(params, spec, base, count, rng, L, substeps=4, guard=1e6, chunk=2000):
    """Pathwise bound and tail exceedances for white-noise perturbations.

    W is sampled on the fine grid; eta = dW/dt is constant on each fine step,
    so int_0^t eta is the piecewise-linear interpolant of the sampled W and
    its supremum is attained at a grid node.
    Returns (violations, max ratio, blow-ups, diffs, max |h|).
    """
    times, x = base.times, base.values
    grid = fine_grid(times, substeps)
    dts = grid.steps
    clean, states0, _ = _predict_values(params, spec, times, x[None], substeps, guard)
    radius = float(np.abs(states0).max())
    violations, max_ratio, blowups = 0, 0.0, 0
    diffs = []
    done = 0
    n = base.n
    while done < count:
        k = min(chunk, count - done)
        dW = rng.normal(size=(len(dts), k, n)) * np.sqrt(dts)[:, None, None]
        W = np.cumsum(dW, axis=0)
        supW = np.linalg.norm(W, axis=2).max(axis=0)
        probs, states, blown = _predict_values(
            params, spec, times, np.broadcast_to(x[None], (k,) + x.shape), substeps, guard,
            extra=dW / dts[:, None, None])
        radius = max(radius, float(np.abs(states[:, ~blown]).max(initial=0.0)))
        diff = np.linalg.norm(probs - clean, axis=1)
        ok = ~blown
        bound = L * supW
        violations += int(np.sum(ok & (diff > bound)))
        if ok.any():
            max_ratio = max(max_ratio, float((diff[ok] / bound[ok]).max()))
        blowups += int(blown.sum())
        # blow-ups count as exceeding any radius in the tail estimate
        diffs.append(np.where(ok, diff, np.inf))
        done += k
    return violations, max_ratio, blowups, np.concatenate(diffs), radius


def stability_check(params: Parameters, spec: DictionarySpec, base, n_perturbations: int = 10000,
                    n_paths: int = 10000, seed=0, substeps: int = 4, guard: float = 1e6,
                    domain_radius: float | None = None) -> StabilityReport:
    """Run both checks around the input signal ``base`` (a TimeSeries).

    For polynomial dictionaries of degree >= 2 the dictionary Lipschitz
    constant is local; unless ``domain_radius`` is given, the largest |h_i|
    met by any clean or perturbed trajectory is used, after the runs.
    """
    rng = np.random.default_rng(seed)
    T = base.final_time
    local = spec.kind == "polynomial" and spec.degree >= 2
    radius = domain_radius if domain_radius is not None else 1.0
    consts = stability_constant(params, spec, T, radius)
    L = consts["L"]
    if local and domain_radius is None:
        # run with a provisional L, then tighten the bound to the visited region and recount
        state = rng.bit_generator.state
        *_, r1 = check_deterministic(params, spec, base, n_perturbations, rng, np.inf, substeps, guard)
        *_, r2 = check_wiener(params, spec, base, n_paths, rng, np.inf, substeps, guard)
        radius = max(r1, r2) * np.sqrt(spec.m)
        consts = stability_constant(params, spec, T, radius)
        L = consts["L"]
        rng.bit_generator.state = state
    v1, ratio1, b1, _ = check_deterministic(params, spec, base, n_perturbations, rng, L, substeps, guard)
    v2, ratio2, b2, diffs, _ = check_wiener(params, spec, base, n_paths, rng, L, substeps, guard)
    d = base.n
    r = 3.0 * np.sqrt(d * T) * L
    with np.errstate(over="ignore", invalid="ignore"):
        tail_bound = float(min(1.0, 2 * d * np.exp(-r * r / (2 * d * T * L * L)))) if np.isfinite(L) else 1.0
    tail = float(np.mean(diffs >= r))
    return StabilityReport(L, consts["lip_dictionary"], consts["norm_beta"], consts["norm_B"],
                           consts["norm_A"], float(radius), n_perturbations, v1, ratio1, b1,
                           n_paths, v2, ratio2, b2, d, float(r), tail_bound, tail)
