"""Candidate-function dictionaries for the hidden-state vector field.

Two families are supported:

* polynomial: every monomial of total degree <= k in the m hidden
  coordinates, scaled by the Taylor coefficient 1/(a_1! ... a_m!);
* fourier: tensor products of the per-coordinate factors
  (1, cos(2 pi h/L), sin(2 pi h/L), ..., cos(2 pi K h/L), sin(2 pi K h/L)).

All evaluation routines are vectorized over a leading batch axis so a whole
batch of hidden states can be pushed through in one call.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DictionarySpec",
    "DictionaryEval",
    "NonFiniteInput",
    "polynomial",
    "fourier",
    "dimension",
    "evaluate",
    "evaluate_batch",
    "lipschitz_estimate",
    "lipschitz_vector",
]


class NonFiniteInput(ValueError):
    """Raised when a dictionary is evaluated at a NaN or infinite state."""


@dataclass(frozen=True)
class DictionarySpec:
    """Declarative description of a dictionary.

    ``kind`` is ``"polynomial"`` (uses ``degree``) or ``"fourier"`` (uses
    ``multiplier`` and ``period``).
    """

    kind: str
    m: int
    degree: int = 1
    multiplier: int = 1
    period: float = 10.0
    _exponents: np.ndarray = field(init=False, repr=False, compare=False)
    _coef: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("polynomial", "fourier"):
            raise ValueError(f"unknown dictionary kind {self.kind!r}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("hidden dimension m must be a positive integer")
        if self.kind == "polynomial":
            if int(self.degree) != self.degree or self.degree < 0:
                raise ValueError("polynomial degree must be a non-negative integer")
            exps = _graded_lex_exponents(self.m, self.degree)
        else:
            if int(self.multiplier) != self.multiplier or self.multiplier < 1:
                raise ValueError("fourier multiplier K must be a positive integer")
            if not (np.isfinite(self.period) and self.period > 0):
                raise ValueError("fourier period L must be positive")
            exps = _fourier_index(self.m, self.multiplier)
        object.__setattr__(self, "_exponents", exps)
        coef = np.array([1.0 / math.prod(math.factorial(int(a)) for a in row) for row in exps])
        object.__setattr__(self, "_coef", coef)

    @property
    def d(self) -> int:
        return dimension(self)

    @property
    def basis_index(self) -> np.ndarray:
        """Integer table describing the basis order (one row per function).

        Polynomial: exponent tuples. Fourier: per-coordinate factor indices
        into (1, cos k=1, sin k=1, cos k=2, ...).
        """
        return self._exponents.copy()

    def labels(self) -> list[str]:
        """Human-readable names of the basis functions, in basis order."""
        names = []
        if self.kind == "polynomial":
            for row in self._exponents:
                parts = []
                for i, a in enumerate(row):
                    if a == 1:
                        parts.append(f"h{i + 1}")
                    elif a > 1:
                        parts.append(f"h{i + 1}^{a}")
                coef = math.prod(math.factorial(int(a)) for a in row)
                term = "*".join(parts) if parts else "1"
                names.append(term if coef == 1 else f"{term}/{coef}")
        else:
            for row in self._exponents:
                parts = []
                for i, f in enumerate(row):
                    if f == 0:
                        continue
                    k = (f + 1) // 2
                    trig = "cos" if f % 2 else "sin"
                    parts.append(f"{trig}({k}h{i + 1})")
                names.append("*".join(parts) if parts else "1")
        return names

    def to_dict(self) -> dict:
        if self.kind == "polynomial":
            return {"kind": "polynomial", "m": int(self.m), "k": int(self.degree)}
        return {
            "kind": "fourier",
            "m": int(self.m),
            "K": int(self.multiplier),
            "L": float(self.period),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DictionarySpec":
        kind = data["kind"]
        if kind == "polynomial":
            return polynomial(int(data["m"]), int(data["k"]))
        if kind == "fourier":
            return fourier(int(data["m"]), int(data["K"]), float(data["L"]))
        raise ValueError(f"unknown dictionary kind {kind!r}")


def polynomial(m: int, k: int) -> DictionarySpec:
    return DictionarySpec("polynomial", m, degree=k)


def fourier(m: int, K: int, L: float = 10.0) -> DictionarySpec:
    return DictionarySpec("fourier", m, multiplier=K, period=float(L))


def _graded_lex_exponents(m, k):
    # total degree first, then lexicographically descending exponent tuples,
    # so degree one reads (h1, h2, ..., hm)
    rows = []
    for deg in range(k + 1):
        block = [a for a in itertools.product(range(deg + 1), repeat=m) if sum(a) == deg]
        block.sort(reverse=True)
        rows.extend(block)
    return np.array(rows, dtype=int).reshape(len(rows), m)


def _fourier_index(m, K):
    # last coordinate varies fastest
    return np.array(list(itertools.product(range(2 * K + 1), repeat=m)), dtype=int)


def dimension(spec: DictionarySpec) -> int:
    if spec.kind == "polynomial":
        return math.comb(spec.degree + spec.m, spec.m)
    return (2 * spec.multiplier + 1) ** spec.m


@dataclass(frozen=True)
class DictionaryEval:
    values: np.ndarray
    jacobian: np.ndarray


def evaluate(spec: DictionarySpec, h) -> DictionaryEval:
    """Evaluate Xi(h) and its Jacobian (d x m) at a single state."""
    h = np.asarray(h, dtype=float)
    if h.shape != (spec.m,):
        raise ValueError(f"expected a state of length {spec.m}, got shape {h.shape}")
    values, jac = evaluate_batch(spec, h[None, :], jacobian=True)
    return DictionaryEval(values[0], jac[0])


def evaluate_batch(spec: DictionarySpec, h: np.ndarray, jacobian: bool = False, check: bool = True):
    """Evaluate the dictionary on a batch of states ``h`` with shape (N, m).

    Returns ``values`` (N, d), and when ``jacobian`` is set also the
    Jacobian stack (N, d, m).
    """
    h = np.asarray(h, dtype=float)
    if check and not np.all(np.isfinite(h)):
        raise NonFiniteInput("dictionary evaluated at a non-finite hidden state")
    out = evaluate_transposed(spec, h, jacobian)
    if not jacobian:
        return out.T
    values, jac = out
    return values.T, jac.transpose(2, 1, 0)


def evaluate_transposed(spec: DictionarySpec, h: np.ndarray, jacobian: bool = False):
    """Sample-last layout used by the solvers: values (d, N), Jacobian (m, d, N).

    No finiteness check.
    """
    if spec.kind == "polynomial":
        return _poly_eval(spec, h, jacobian)
    return _fourier_eval(spec, h, jacobian)


def _outer_chain(factors):
    # factors: list of (q_i, N) arrays; outer product over the leading axes
    # with the last factor varying fastest
    out = factors[0]
    N = out.shape[1]
    for f in factors[1:]:
        out = (out[:, None, :] * f[None, :, :]).reshape(-1, N)
    return out


def _poly_eval(spec, h, jacobian):
    E = spec._exponents
    coef = spec._coef[:, None]
    k = spec.degree
    N, m = h.shape
    ht = h.T
    # powers[p, i, n] = h_i ** p
    powers = np.empty((k + 1, m, N))
    powers[0] = 1.0
    for p in range(1, k + 1):
        powers[p] = powers[p - 1] * ht
    # factors[i] = h_i ** E[:, i], shape (d, N)
    factors = [powers[E[:, i], i] for i in range(m)]
    values = coef * math.prod(factors) if m > 1 else coef * factors[0]
    if not jacobian:
        return values
    # product of the other coordinates' factors via prefix/suffix products
    ones = np.ones_like(values)
    prefix = [ones]
    for f in factors[:-1]:
        prefix.append(prefix[-1] * f)
    suffix = [ones]
    for f in factors[:0:-1]:
        suffix.append(suffix[-1] * f)
    suffix.reverse()
    jac = np.empty((m, len(E), N))
    for i in range(m):
        Ei = E[:, i]
        dfac = powers[np.maximum(Ei - 1, 0), i] * Ei[:, None]
        jac[i] = coef * dfac * prefix[i] * suffix[i]
    return values, jac


def _fourier_factors(spec, h):
    """Per-coordinate factors and derivatives, shapes (2K+1, m, N).

    Harmonics k >= 2 come from the angle-addition recurrence, so only one
    cos/sin pair is evaluated per coordinate.
    """
    K = spec.multiplier
    w = 2.0 * np.pi / spec.period
    x = w * h.T
    c1, s1 = np.cos(x), np.sin(x)
    f = np.empty((2 * K + 1,) + x.shape)
    df = np.empty_like(f)
    f[0] = 1.0
    df[0] = 0.0
    f[1] = c1
    f[2] = s1
    for k in range(2, K + 1):
        f[2 * k - 1] = c1 * f[2 * k - 3] - s1 * f[2 * k - 2]
        f[2 * k] = s1 * f[2 * k - 3] + c1 * f[2 * k - 2]
    for k in range(1, K + 1):
        df[2 * k - 1] = -(k * w) * f[2 * k]
        df[2 * k] = (k * w) * f[2 * k - 1]
    return f, df


def _fourier_eval(spec, h, jacobian):
    f, df = _fourier_factors(spec, h)
    m = spec.m
    values = _outer_chain([f[:, i] for i in range(m)])
    if not jacobian:
        return values
    jac = np.empty((m,) + values.shape)
    for i in range(m):
        jac[i] = _outer_chain([df[:, l] if l == i else f[:, l] for l in range(m)])
    return values, jac


def lipschitz_estimate(spec: DictionarySpec, domain_radius: float = 1.0) -> float:
    """Per-entry Lipschitz bound: |xi_j(h1) - xi_j(h2)| <= L * ||h1 - h2||.

    Fourier bounds are global (2 pi K m / L).  Polynomial bounds hold on the
    Euclidean ball of radius ``domain_radius`` and come from the analytic
    gradient of each monomial, with every |h_i| bounded by the radius.
    """
    if spec.kind == "fourier":
        return 2.0 * np.pi * spec.multiplier * spec.m / spec.period
    if domain_radius <= 0:
        raise ValueError("domain_radius must be positive")
    return float(np.max(_poly_gradient_bounds(spec, domain_radius)))


def _poly_gradient_bounds(spec, R):
    # Euclidean norm bound of grad xi_j on ||h|| <= R, one entry per basis function
    out = []
    for row in spec._exponents:
        total = int(row.sum())
        coef = math.prod(math.factorial(int(a)) for a in row)
        comps = [a * R ** (total - 1) / coef for a in row if a > 0]
        out.append(math.sqrt(sum(c * c for c in comps)))
    return np.array(out)


def lipschitz_vector(spec: DictionarySpec, domain_radius: float = 1.0) -> float:
    """Lipschitz bound for the whole map h -> Xi(h) in Euclidean norms.

    Uses sup ||D Xi(h)||_F.  For the Fourier product basis the Frobenius norm
    is the same at every h:  m (1+K)^(m-1) (2 pi / L)^2 sum_k k^2.
    """
    if spec.kind == "fourier":
        K, m = spec.multiplier, spec.m
        sumk2 = K * (K + 1) * (2 * K + 1) / 6.0
        return math.sqrt(m * (1 + K) ** (m - 1) * (2 * np.pi / spec.period) ** 2 * sumk2)
    return float(np.sqrt(np.sum(_poly_gradient_bounds(spec, domain_radius) ** 2)))
