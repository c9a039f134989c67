"""Fixed-step RK4 solvers for the forward model and its adjoint.

Every RK4 step sits inside one sample interval of the input signal
(``substeps`` equal steps per interval), so the piecewise-linear forcing is
smooth within each step and the scheme keeps its fourth order.

The solvers work on *batches*: all series in a batch share one time grid and
are advanced together, states carrying a sample axis, ``(G, N, m)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dictionary import DictionarySpec, evaluate_transposed
from .signal import TimeSeries

__all__ = [
    "BlowUp",
    "FineGrid",
    "Trajectory",
    "fine_grid",
    "grid_forcing",
    "forward_batch",
    "adjoint_batch",
    "solve_forward",
    "solve_adjoint",
    "quadrature",
    "DEFAULT_GUARD",
]

DEFAULT_GUARD = 1e6


class BlowUp(ArithmeticError):
    """Hidden or adjoint state left the guard box (finite-time escape)."""

    def __init__(self, t, sample=None, message=None):
        self.t = float(t)
        self.sample = sample
        where = f" (sample {sample})" if sample is not None else ""
        super().__init__(message or f"solution blew up at t={self.t:g}{where}")


@dataclass(frozen=True)
class FineGrid:
    times: np.ndarray
    sample_times: np.ndarray
    substeps: int

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.times[:-1] + self.times[1:])


def fine_grid(sample_times, substeps: int = 1) -> FineGrid:
    """Subdivide every sample interval into ``substeps`` equal steps."""
    if int(substeps) != substeps or substeps < 1:
        raise ValueError("substeps must be a positive integer")
    t = np.asarray(sample_times, dtype=float)
    frac = np.arange(substeps) / substeps
    inner = (t[:-1, None] + frac[None, :] * np.diff(t)[:, None]).ravel()
    times = np.concatenate([inner, t[-1:]])
    return FineGrid(times, t, int(substeps))


def grid_forcing(values: np.ndarray, substeps: int):
    """Forcing at fine nodes and at step midpoints.

    ``values`` is (N, M+1, n).  Both outputs are exact evaluations of the
    piecewise-linear interpolant, shapes (G, N, n) and (G-1, N, n).
    """
    x = np.asarray(values, dtype=float)
    dx = np.diff(x, axis=1)  # (N, M, n)
    s = substeps
    frac = np.arange(s) / s
    mfrac = (np.arange(s) + 0.5) / s
    nodes = x[:, :-1, None, :] + frac[None, None, :, None] * dx[:, :, None, :]
    nodes = nodes.reshape(x.shape[0], -1, x.shape[2])
    nodes = np.concatenate([nodes, x[:, -1:, :]], axis=1)
    mids = x[:, :-1, None, :] + mfrac[None, None, :, None] * dx[:, :, None, :]
    mids = mids.reshape(x.shape[0], -1, x.shape[2])
    return np.ascontiguousarray(nodes.transpose(1, 0, 2)), np.ascontiguousarray(mids.transpose(1, 0, 2))


@dataclass
class Trajectory:
    """Solution on a fine grid.

    ``states`` is (G, m) for a single series or (G, N, m) for a batch.
    ``forcing`` keeps the node/midpoint forcing used by the forward solve so
    the adjoint can rebuild the vector field.  ``blown`` flags samples that
    escaped the guard when solving in masking mode.
    """

    grid: FineGrid
    states: np.ndarray
    forcing: tuple | None = None
    blown: np.ndarray | None = None

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _rhs_t(spec, beta, h_t, drive_t):
    # vector field in sample-last layout: h_t (m, N), drive_t = B x as (m, N)
    return beta @ evaluate_transposed(spec, h_t.T) + drive_t


def _drive(B, x):
    # B x for every node and sample, (G, N, n) -> (G, m, N)
    return np.einsum("mk,gnk->gmn", B, x)


def forward_batch(beta, B, spec: DictionarySpec, grid: FineGrid, x_nodes, x_mids,
                  h0=None, guard: float = DEFAULT_GUARD, mask_blowup: bool = False,
                  x_ends=None):
    """Classic RK4 for dh/dt = beta Xi(h) + B x(t), batched over samples.

    Returns ``(states, blown)``; states has shape (G, N, m).  Unless
    ``mask_blowup`` is set, a sample leaving ``|h| <= guard`` raises
    :class:`BlowUp`.  Masked samples are frozen at zero from then on.

    Step g uses x_nodes[g], x_mids[g] and, at its right end, x_ends[g]
    (default x_nodes[g + 1]); separate ends allow forcing that jumps at nodes.
    """
    G, N = x_nodes.shape[0], x_nodes.shape[1]
    m = spec.m
    states = np.empty((G, N, m))
    h0 = np.zeros((N, m)) if h0 is None else np.broadcast_to(h0, (N, m))
    h = np.array(h0, dtype=float).T.copy()  # (m, N)
    states[0] = h.T
    blown = np.zeros(N, dtype=bool)
    dts = grid.steps
    bx_nodes = _drive(B, x_nodes)
    bx_mids = _drive(B, x_mids)
    bx_ends = bx_nodes[1:] if x_ends is None else _drive(B, x_ends)
    with np.errstate(over="ignore", invalid="ignore"):
        for g in range(G - 1):
            dt = dts[g]
            k1 = _rhs_t(spec, beta, h, bx_nodes[g])
            k2 = _rhs_t(spec, beta, h + 0.5 * dt * k1, bx_mids[g])
            k3 = _rhs_t(spec, beta, h + 0.5 * dt * k2, bx_mids[g])
            k4 = _rhs_t(spec, beta, h + dt * k3, bx_ends[g])
            h = h + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            bad = ~np.all(np.isfinite(h) & (np.abs(h) <= guard), axis=0)
            if bad.any():
                if not mask_blowup:
                    raise BlowUp(grid.times[g + 1], int(np.flatnonzero(bad)[0]))
                blown |= bad
                h[:, blown] = 0.0
            states[g + 1] = h.T
    return states, blown


def _adjoint_rate(beta, lam_t, jac_t):
    # -(beta D Xi(h))^T lam per sample; lam_t (m, N), jac_t (m, d, N)
    w = beta.T @ lam_t  # (d, N)
    return -np.einsum("dn,idn->in", w, jac_t)


def adjoint_batch(beta, B, spec: DictionarySpec, grid: FineGrid, states, x_nodes, x_mids,
                  terminal, scheme: str = "rk4", guard: float = DEFAULT_GUARD,
                  accumulate: bool = True):
    """Integrate d lam/dt = -(beta D Xi(h))^T lam backward from ``terminal``.

    ``scheme="rk4"``: hidden states at half steps from the cubic Hermite
    interpolant of the stored trajectory (node derivatives are the vector
    field itself), and the gradient integrals
    int lam Xi(h)^T dt, int lam x^T dt carried as extra RK4 components.
    ``scheme="trapezoid"``: linear interpolation at half steps and trapezoid
    quadrature of the integrals over the fine grid.

    Returns ``(lam, int_lam_xi, int_lam_x)`` where ``lam`` is (G, N, m) and
    the integrals are already summed over the batch, shapes (m, d), (m, n).
    """
    if scheme not in ("rk4", "trapezoid"):
        raise ValueError(f"unknown adjoint scheme {scheme!r}")
    G, N, m = states.shape
    lam = np.empty((G, N, m))
    lam[-1] = terminal
    I_xi = np.zeros((m, spec.d))
    I_x = np.zeros((m, B.shape[1]))
    dts = grid.steps
    hb = states[-1]
    xi_b, jac_b = evaluate_transposed(spec, hb, jacobian=True)
    bx_nodes = _drive(B, x_nodes) if scheme == "rk4" else None
    lb = np.array(terminal, dtype=float).reshape(N, m).T.copy()
    for g in range(G - 2, -1, -1):
        dt = dts[g]
        ha = states[g]
        xi_a, jac_a = evaluate_transposed(spec, ha, jacobian=True)
        if scheme == "rk4":
            fa = beta @ xi_a + bx_nodes[g]
            fb = beta @ xi_b + bx_nodes[g + 1]
            hm = 0.5 * (ha + hb) + (dt / 8.0) * (fa - fb).T
        else:
            hm = 0.5 * (ha + hb)
        xi_m, jac_m = evaluate_transposed(spec, hm, jacobian=True)

        k1 = _adjoint_rate(beta, lb, jac_b)
        l2 = lb - 0.5 * dt * k1
        k2 = _adjoint_rate(beta, l2, jac_m)
        l3 = lb - 0.5 * dt * k2
        k3 = _adjoint_rate(beta, l3, jac_m)
        l4 = lb - dt * k3
        k4 = _adjoint_rate(beta, l4, jac_a)
        la = lb - (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        ok = np.isfinite(la) & (np.abs(la) <= guard)
        if not ok.all():
            bad = ~np.all(ok, axis=0)
            raise BlowUp(grid.times[g], int(np.flatnonzero(bad)[0]), "adjoint blew up")
        lam[g] = la.T

        if accumulate:
            if scheme == "rk4":
                l23 = l2 + l3
                I_xi += (dt / 6.0) * (lb @ xi_b.T + 2.0 * (l23 @ xi_m.T) + l4 @ xi_a.T)
                I_x += (dt / 6.0) * (
                    lb @ x_nodes[g + 1] + 2.0 * (l23 @ x_mids[g]) + l4 @ x_nodes[g]
                )
            else:
                I_xi += (0.5 * dt) * (lb @ xi_b.T + la @ xi_a.T)
                I_x += (0.5 * dt) * (lb @ x_nodes[g + 1] + la @ x_nodes[g])
        hb, xi_b, jac_b, lb = ha, xi_a, jac_a, la
    return lam, I_xi, I_x


def _as_batch(series):
    if isinstance(series, TimeSeries):
        return [series], True
    return list(series), False


def solve_forward(params, spec: DictionarySpec, ts, substeps: int = 1,
                  guard: float = DEFAULT_GUARD) -> Trajectory:
    """Forward solve from h(0) = 0 for one series (or a same-grid batch)."""
    batch, single = _as_batch(ts)
    times = batch[0].times
    for other in batch[1:]:
        if not np.array_equal(other.times, times):
            raise ValueError("batched series must share a time grid")
    grid = fine_grid(times, substeps)
    xn, xm = grid_forcing(np.stack([b.values for b in batch]), substeps)
    states, blown = forward_batch(params.beta, params.B, spec, grid, xn, xm, guard=guard)
    if single:
        states = states[:, 0, :]
    return Trajectory(grid, states, (xn, xm), blown)


def solve_adjoint(params, spec: DictionarySpec, forward: Trajectory, terminal,
                  scheme: str = "rk4", guard: float = DEFAULT_GUARD) -> Trajectory:
    """Backward adjoint solve on the forward trajectory's grid."""
    states = forward.states
    single = states.ndim == 2
    if single:
        states = states[:, None, :]
    terminal = np.asarray(terminal, dtype=float).reshape(states.shape[1], states.shape[2])
    if not np.all(np.isfinite(terminal)):
        raise ValueError("terminal adjoint value must be finite")
    if forward.forcing is None:
        raise ValueError("forward trajectory does not carry its forcing")
    xn, xm = forward.forcing
    lam, _, _ = adjoint_batch(params.beta, params.B, spec, forward.grid, states, xn, xm,
                              terminal, scheme=scheme, guard=guard, accumulate=False)
    if single:
        lam = lam[:, 0, :]
    return Trajectory(forward.grid, lam, forward.forcing)


def quadrature(times, values) -> np.ndarray:
    """Composite trapezoid rule along the first axis over a nonuniform grid."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if v.shape[0] != t.shape[0]:
        raise ValueError("one value per grid node is required")
    dt = np.diff(t).reshape((-1,) + (1,) * (v.ndim - 1))
    return np.sum(0.5 * dt * (v[1:] + v[:-1]), axis=0)
