"""Training: ADAM on adjoint gradients, hard thresholding of beta, and
cross-validated choice of the threshold."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .dictionary import DictionarySpec
from .gradients import adjoint_gradients
from .integrator import DEFAULT_GUARD, BlowUp
from .model import Parameters, initialize, predict_batch

__all__ = [
    "TrainConfig",
    "TrainReport",
    "AdamState",
    "BlowUpDuringTraining",
    "adam_step",
    "threshold_beta",
    "train",
    "evaluate",
    "stratified_folds",
    "cross_validate_lambda",
    "CVResult",
    "LEARNING_RATES",
    "LAMBDA_GRID",
]

log = logging.getLogger(__name__)

LEARNING_RATES = (0.001, 0.005, 0.01, 0.05, 0.1, 0.5)
LAMBDA_GRID = (0.01, 0.03, 0.05, 0.1, 0.5, 1.0)


class BlowUpDuringTraining(ArithmeticError):
    def __init__(self, epoch, sample_id, t):
        self.epoch = epoch
        self.sample_id = sample_id
        self.t = t
        super().__init__(
            f"forward/adjoint solve blew up at epoch {epoch}, sample {sample_id!r}, t={t:g}; "
            "re-initialize or lower the learning rate"
        )


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    max_epochs: int = 1000
    batch_size: int | None = None  # None: full batch
    substeps: int = 1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    convergence_tol: float = 1e-5
    patience: int = 20
    sparse_lambda: float = 0.0
    seed: int = 0
    scheme: str = "rk4"
    guard: float = DEFAULT_GUARD
    threads: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.sparse_lambda < 0:
            raise ValueError("sparse_lambda must be >= 0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass
class TrainReport:
    loss_history: list = field(default_factory=list)
    train_accuracy: float = float("nan")
    test_accuracy: float | None = None
    nonzero_beta_count: int = 0
    wall_time: float = 0.0
    epochs: int = 0
    converged: bool = False
    best_epoch: int = 0
    best_loss: float = float("inf")
    epoch_log: list = field(default_factory=list)  # (epoch, loss, train_acc, nnz_beta)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Parameters) -> "AdamState":
        blocks = params.blocks()
        return cls({k: np.zeros_like(a) for k, a in blocks.items()},
                   {k: np.zeros_like(a) for k, a in blocks.items()})


def adam_step(state: AdamState, params: Parameters, grads, config: TrainConfig):
    """One bias-corrected ADAM update; returns new (params, state)."""
    b1, b2, eps, lr = config.adam_beta1, config.adam_beta2, config.adam_eps, config.learning_rate
    t = state.t + 1
    g = grads.blocks() if hasattr(grads, "blocks") else grads
    new_m, new_v, new_p = {}, {}, {}
    for k, p in params.blocks().items():
        gk = g[k]
        new_m[k] = b1 * state.m[k] + (1 - b1) * gk
        new_v[k] = b2 * state.v[k] + (1 - b2) * gk * gk
        mhat = new_m[k] / (1 - b1 ** t)
        vhat = new_v[k] / (1 - b2 ** t)
        new_p[k] = p - lr * mhat / (np.sqrt(vhat) + eps)
    return Parameters(**new_p), AdamState(new_m, new_v, t)


def threshold_beta(params: Parameters, lam: float) -> Parameters:
    """Zero every beta entry with magnitude below ``lam``."""
    if lam <= 0:
        return params
    out = params.copy()
    out.beta[np.abs(out.beta) < lam] = 0.0
    return out


def evaluate(params: Parameters, spec: DictionarySpec, split, substeps: int = 1,
             guard: float = DEFAULT_GUARD) -> float:
    """Fraction of series whose argmax prediction matches the label.

    A series whose forward solve blows up counts as misclassified.
    """
    series = list(split)
    if not series:
        raise ValueError("cannot evaluate an empty split")
    probs, _, blown = predict_batch(params, spec, series, substeps, guard, mask_blowup=True)
    if blown.any():
        ids = [series[i].id for i in np.flatnonzero(blown)]
        log.warning("%d series blew up during evaluation (first: %s)", len(ids), ids[0])
    labels = np.array([ts.label_index for ts in series])
    correct = (np.argmax(probs, axis=1) == labels) & ~blown
    return float(np.mean(correct))


def _relative_change(prev, cur):
    return abs(cur - prev) / max(abs(prev), 1e-300)


def train(train_set, spec: DictionarySpec, config: TrainConfig, test_set=None,
          init: Parameters | None = None, on_step=None):
    """Minimize the cross-entropy with ADAM; with ``sparse_lambda > 0`` each
    descent step is followed by hard thresholding of beta.

    Stops when the relative loss change stays below ``convergence_tol`` for
    ``patience`` consecutive epochs, or after ``max_epochs``.  Returns the
    parameters with the lowest recorded loss and a :class:`TrainReport`.
    ``on_step(epoch, params)`` is called after every update.
    """
    series = list(train_set)
    if not series:
        raise ValueError("training split is empty")
    n = series[0].n
    num_classes = len(series[0].label)
    params = init.copy() if init is not None else initialize(spec, n, num_classes, config.seed)
    params.check(spec, n, num_classes)
    state = AdamState.zeros_like(params)
    rng = np.random.default_rng(config.seed)
    report = TrainReport()
    best = params.copy()
    quiet = 0
    t0 = time.perf_counter()
    lam = config.sparse_lambda

    for epoch in range(config.max_epochs):
        if config.batch_size is None or config.batch_size >= len(series):
            batches = [series]
        else:
            order = rng.permutation(len(series))
            bs = config.batch_size
            batches = [[series[i] for i in order[s:s + bs]] for s in range(0, len(order), bs)]
        epoch_loss, correct, seen = 0.0, 0, 0
        for batch in batches:
            try:
                value, grads, n_correct = adjoint_gradients(
                    params, spec, batch, config.substeps, scheme=config.scheme,
                    guard=config.guard, threads=config.threads, return_accuracy=True)
            except BlowUp as exc:
                sid = batch[exc.sample].id if exc.sample is not None else None
                raise BlowUpDuringTraining(epoch, sid, exc.t) from exc
            if len(batches) == 1:
                # full batch: the evaluated loss belongs to the current params
                if value < report.best_loss:
                    report.best_loss = value
                    report.best_epoch = epoch
                    best = params.copy()
            epoch_loss += value * len(batch)
            correct += n_correct
            seen += len(batch)
            params, state = adam_step(state, params, grads, config)
            if lam > 0:
                params = threshold_beta(params, lam)
            if on_step is not None:
                on_step(epoch, params)
        epoch_loss /= seen
        if len(batches) > 1 and epoch_loss < report.best_loss:
            report.best_loss = epoch_loss
            report.best_epoch = epoch
            best = params.copy()
        nnz = int(np.count_nonzero(params.beta))
        report.loss_history.append(epoch_loss)
        report.epoch_log.append((epoch, epoch_loss, correct / seen, nnz))
        if not np.isfinite(epoch_loss):
            raise BlowUpDuringTraining(epoch, None, float("nan"))
        if epoch > 0 and _relative_change(report.loss_history[-2], epoch_loss) < config.convergence_tol:
            quiet += 1
            if quiet >= config.patience:
                report.converged = True
                break
        else:
            quiet = 0

    if lam > 0:
        best = threshold_beta(best, lam)
    report.epochs = len(report.loss_history)
    report.wall_time = time.perf_counter() - t0
    report.nonzero_beta_count = int(np.count_nonzero(best.beta))
    report.train_accuracy = evaluate(best, spec, series, config.substeps, config.guard)
    if test_set is not None and len(test_set):
        report.test_accuracy = evaluate(best, spec, test_set, config.substeps, config.guard)
    if not report.converged:
        log.info("training stopped at max_epochs=%d without meeting the convergence test",
                 config.max_epochs)
    return best, report


def stratified_folds(labels, k: int = 5, seed=0) -> list:
    """Split indices into ``k`` folds preserving class ratios.

    Indices are shuffled within each class, classes are concatenated, and
    positions are dealt round-robin, so overall fold sizes differ by at most
    one and so do the per-class counts.
    """
    labels = np.asarray(labels)
    if len(labels) < k:
        raise ValueError(f"need at least {k} samples for {k}-fold cross-validation")
    rng = np.random.default_rng(seed)
    order = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        order.extend(rng.permutation(idx).tolist())
    folds = [[] for _ in range(k)]
    for pos, i in enumerate(order):
        folds[pos % k].append(i)
    return [sorted(f) for f in folds]


@dataclass
class CVResult:
    chosen: float
    lambdas: list
    fold_scores: np.ndarray  # (len(lambdas), k)

    @property
    def mean_scores(self) -> np.ndarray:
        return self.fold_scores.mean(axis=1)

    def table(self) -> str:
        k = self.fold_scores.shape[1]
        head = "lambda  " + "  ".join(f"fold{i + 1:<2d}" for i in range(k)) + "    mean"
        rows = [head]
        for lam, row in zip(self.lambdas, self.fold_scores):
            rows.append(f"{lam:6.3g}  " + "  ".join(f"{s:6.4f}" for s in row) + f"  {row.mean():6.4f}")
        return "\n".join(rows)


def cross_validate_lambda(dataset, spec: DictionarySpec, config: TrainConfig,
                          lambda_grid=LAMBDA_GRID, k: int = 5) -> CVResult:
    """Pick the threshold with the best mean held-out accuracy (ties: smaller)."""
    series = list(dataset)
    lambdas = sorted(float(x) for x in lambda_grid)
    if not lambdas:
        raise ValueError("empty lambda grid")
    if len(lambdas) == 1:
        return CVResult(lambdas[0], lambdas, np.full((1, k), np.nan))
    labels = np.array([ts.label_index for ts in series])
    folds = stratified_folds(labels, k, seed=config.seed)
    scores = np.zeros((len(lambdas), k))
    for a, lam in enumerate(lambdas):
        cfg = TrainConfig(**{**asdict(config), "sparse_lambda": lam})
        for f, held in enumerate(folds):
            held_set = set(held)
            tr = [series[i] for i in range(len(series)) if i not in held_set]
            te = [series[i] for i in held]
            try:
                params, _ = train(tr, spec, cfg)
                scores[a, f] = evaluate(params, spec, te, cfg.substeps, cfg.guard)
            except BlowUpDuringTraining as exc:
                log.warning("lambda=%g fold %d: %s", lam, f, exc)
                scores[a, f] = 0.0
    means = scores.mean(axis=1)
    chosen = lambdas[int(np.argmax(means))]  # first max is the smallest lambda
    return CVResult(chosen, lambdas, scores)
