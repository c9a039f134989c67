"""The classifier: parameters, readout, loss, and initialization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dictionary import DictionarySpec
from .integrator import DEFAULT_GUARD, fine_grid, forward_batch, grid_forcing
from .signal import TimeSeries, group_by_grid

__all__ = [
    "Parameters",
    "Prediction",
    "initialize",
    "softmax",
    "log_softmax",
    "param_count",
    "predict",
    "predict_batch",
    "final_states",
    "loss",
]

BLOCKS = ("beta", "B", "A", "b")


@dataclass
class Parameters:
    """Trainable set {beta (m x d), B (m x n), A (|Y| x m), b (|Y|)}."""

    beta: np.ndarray
    B: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.beta = np.array(self.beta, dtype=float, ndmin=2)
        self.B = np.array(self.B, dtype=float, ndmin=2)
        self.A = np.array(self.A, dtype=float, ndmin=2)
        self.b = np.array(self.b, dtype=float).reshape(-1)
        m = self.beta.shape[0]
        if self.B.shape[0] != m or self.A.shape[1] != m or self.A.shape[0] != self.b.shape[0]:
            raise ValueError(
                f"inconsistent shapes beta{self.beta.shape} B{self.B.shape} "
                f"A{self.A.shape} b{self.b.shape}"
            )

    @property
    def m(self):
        return self.beta.shape[0]

    @property
    def d(self):
        return self.beta.shape[1]

    @property
    def n(self):
        return self.B.shape[1]

    @property
    def num_classes(self):
        return self.A.shape[0]

    def blocks(self):
        return {k: getattr(self, k) for k in BLOCKS}

    def copy(self) -> "Parameters":
        return Parameters(self.beta.copy(), self.B.copy(), self.A.copy(), self.b.copy())

    def flat(self) -> np.ndarray:
        return np.concatenate([getattr(self, k).ravel() for k in BLOCKS])

    def with_flat(self, theta) -> "Parameters":
        theta = np.asarray(theta, dtype=float)
        out, pos = [], 0
        for k in BLOCKS:
            shape = getattr(self, k).shape
            size = int(np.prod(shape))
            out.append(theta[pos:pos + size].reshape(shape))
            pos += size
        if pos != theta.size:
            raise ValueError("flat parameter vector has the wrong length")
        return Parameters(*out)

    @property
    def size(self) -> int:
        return sum(getattr(self, k).size for k in BLOCKS)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(getattr(self, k))) for k in BLOCKS)

    def check(self, spec: DictionarySpec, n: int | None = None, num_classes: int | None = None):
        if self.beta.shape != (spec.m, spec.d):
            raise ValueError(f"beta has shape {self.beta.shape}, dictionary needs {(spec.m, spec.d)}")
        if n is not None and self.n != n:
            raise ValueError(f"B expects input dimension {self.n}, data has {n}")
        if num_classes is not None and self.num_classes != num_classes:
            raise ValueError(f"readout has {self.num_classes} classes, data has {num_classes}")
        if not self.is_finite():
            raise ValueError("parameters contain non-finite entries")


@dataclass(frozen=True)
class Prediction:
    probabilities: np.ndarray
    hidden_final: np.ndarray

    @property
    def label(self) -> int:
        return int(np.argmax(self.probabilities))


def initialize(spec: DictionarySpec, n: int, num_classes: int, seed=None) -> Parameters:
    """Small random start.

    Linear polynomial or Fourier dictionaries: beta, B, A ~ U[-1, 1] and
    b ~ U[0, 1].  Polynomial dictionaries of degree >= 2 blow up easily, so
    beta, B ~ U[-0.1, 0.1] and A, b ~ U[-1, 1].
    """
    rng = np.random.default_rng(seed)
    m, d = spec.m, spec.d
    if spec.kind == "polynomial" and spec.degree >= 2:
        beta = rng.uniform(-0.1, 0.1, (m, d))
        B = rng.uniform(-0.1, 0.1, (m, n))
        A = rng.uniform(-1.0, 1.0, (num_classes, m))
        b = rng.uniform(-1.0, 1.0, num_classes)
    else:
        beta = rng.uniform(-1.0, 1.0, (m, d))
        B = rng.uniform(-1.0, 1.0, (m, n))
        A = rng.uniform(-1.0, 1.0, (num_classes, m))
        b = rng.uniform(0.0, 1.0, num_classes)
    return Parameters(beta, B, A, b)


def param_count(spec: DictionarySpec, n: int, num_classes: int) -> int:
    return spec.d * spec.m + n * spec.m + spec.m * num_classes + num_classes


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    zmax = np.max(z, axis=-1, keepdims=True)
    shifted = z - zmax
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(z - np.max(z, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def final_states(params: Parameters, spec: DictionarySpec, series, substeps: int = 1,
                 guard: float = DEFAULT_GUARD, mask_blowup: bool = False):
    """h(T_i) for every series, shape (N, m), plus a blow-up mask.

    Series sharing a time grid are solved together.
    """
    series = list(series)
    out = np.zeros((len(series), spec.m))
    blown = np.zeros(len(series), dtype=bool)
    for idx in group_by_grid(series):
        grid = fine_grid(series[idx[0]].times, substeps)
        xn, xm = grid_forcing(np.stack([series[i].values for i in idx]), substeps)
        states, bl = forward_batch(params.beta, params.B, spec, grid, xn, xm,
                                   guard=guard, mask_blowup=mask_blowup)
        out[idx] = states[-1]
        blown[idx] = bl
    return out, blown


def predict_batch(params: Parameters, spec: DictionarySpec, series, substeps: int = 1,
                  guard: float = DEFAULT_GUARD, mask_blowup: bool = False):
    """Class probabilities (N, |Y|), final states (N, m) and blow-up mask."""
    hT, blown = final_states(params, spec, series, substeps, guard, mask_blowup)
    probs = softmax(hT @ params.A.T + params.b)
    return probs, hT, blown


def predict(params: Parameters, spec: DictionarySpec, ts: TimeSeries, substeps: int = 1,
            guard: float = DEFAULT_GUARD) -> Prediction:
    probs, hT, _ = predict_batch(params, spec, [ts], substeps, guard)
    return Prediction(probs[0], hT[0])


def loss(params: Parameters, spec: DictionarySpec, batch, substeps: int = 1,
         guard: float = DEFAULT_GUARD) -> float:
    """Mean cross-entropy over the batch, computed with log-softmax."""
    batch = list(batch)
    if any(ts.label is None for ts in batch):
        raise ValueError("loss needs labeled series")
    hT, _ = final_states(params, spec, batch, substeps, guard)
    Y = np.stack([ts.label for ts in batch])
    logp = log_softmax(hT @ params.A.T + params.b)
    return float(-np.sum(Y * logp) / len(batch))
