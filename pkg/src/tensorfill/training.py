"""Masked-MSE objective, Adam, and the full-batch training loop."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .models import ModelInit, init_model
from .smoothness import SmoothnessConfig, SmoothnessRegularizer
from .tensor import DenseTensor, SparseTensor, SplitSpec, normalized_error, split_entries

__all__ = [
    "TrainConfig",
    "EpochRecord",
    "TrainTrace",
    "AdamState",
    "adam_step",
    "masked_mse",
    "masked_mse_gradient",
    "optimize",
    "train",
    "naive_baseline",
    "decompose_dense",
    "DECOMPOSE_CONFIG",
    "fit_model",
    "RESTART_SEED_OFFSET",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 2000
    patience: int = 50
    tol: float = 1e-6
    seed: int = 0
    validation_fraction: float = 0.1
    regularizer: SmoothnessConfig | None = None

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError(f"learning rate must be >= 0, got {self.lr}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")
        if not 0 <= self.validation_fraction < 1:
            raise ValueError("validation_fraction must be in [0, 1)")

    def with_(self, **changes) -> TrainConfig:
        return replace(self, **changes)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    ms: float


@dataclass
class TrainTrace:
    epochs: list = field(default_factory=list)
    model: object = None
    stop_reason: str = "max-epochs"
    best_epoch: int = 0

    @property
    def train_losses(self) -> np.ndarray:
        return np.array([e.train_loss for e in self.epochs])

    @property
    def val_losses(self) -> np.ndarray:
        return np.array([e.val_loss for e in self.epochs])

    @property
    def initial_loss(self) -> float:
        return self.epochs[0].train_loss if self.epochs else math.nan

    @property
    def final_loss(self) -> float:
        return self.epochs[self.best_epoch].train_loss if self.epochs else math.nan

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "ms"])
        for e in self.epochs:
            w.writerow([e.epoch, repr(e.train_loss), repr(e.val_loss), f"{e.ms:.3f}"])
        return buf.getvalue()


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for k, p in params.items():
        g = grads[k]
        if k not in state.m:
            state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        m, v = state.m[k], state.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state


def masked_mse(model, observed: SparseTensor) -> float:
    """Mean squared error over observed entries only."""
    if observed.nnz == 0:
        raise ValueError("masked_mse needs at least one observed entry")
    r = model.predict(observed.indices) - observed.values
    return float(np.mean(r * r))


def masked_mse_gradient(model, observed: SparseTensor) -> tuple[float, dict]:
    if observed.nnz == 0:
        raise ValueError("masked_mse needs at least one observed entry")
    r = model.predict(observed.indices) - observed.values
    loss = float(np.mean(r * r))
    return loss, model.gradient(observed.indices, (2.0 / r.size) * r)


def optimize(params: dict, objective, config: TrainConfig, validate=None) -> TrainTrace:
    """Full-batch Adam with early stopping on ``validate`` (or the objective).

    ``objective()`` returns ``(loss, grads)`` at the current ``params``;
    ``validate()`` returns a held-out loss. ``params`` is left at the best
    monitored point on return.
    """
    trace = TrainTrace()
    state = AdamState()
    best = math.inf
    ref = math.inf
    wait = 0
    snapshot = {k: v.copy() for k, v in params.items()}
    for epoch in range(config.max_epochs):
        t0 = time.perf_counter()
        loss, grads = objective()
        val = validate() if validate is not None else math.nan
        monitor = val if validate is not None else loss
        if not (math.isfinite(loss) and math.isfinite(monitor)):
            trace.epochs.append(EpochRecord(epoch, loss, val, 1e3 * (time.perf_counter() - t0)))
            trace.stop_reason = "divergence"
            break
        if monitor < best:
            best = monitor
            trace.best_epoch = epoch
            for k, v in params.items():
                snapshot[k][...] = v
        if monitor < ref - config.tol:
            ref = monitor
            wait = 0
        else:
            wait += 1
        stop = wait > config.patience
        if not stop:
            adam_step(params, grads, state, config.lr, config.beta1, config.beta2, config.eps)
        trace.epochs.append(EpochRecord(epoch, loss, val, 1e3 * (time.perf_counter() - t0)))
        if stop:
            trace.stop_reason = "early-stop"
            break
    for k, v in params.items():
        v[...] = snapshot[k]
    return trace


def _regularizer(reg):
    if reg is None:
        return None
    if isinstance(reg, SmoothnessConfig):
        reg = SmoothnessRegularizer(reg)
    # lam == 0 must reproduce the unregularized run bit for bit
    return None if getattr(reg, "lam", None) == 0 else reg


def train(model, observed: SparseTensor, config: TrainConfig | None = None) -> TrainTrace:
    """Fit ``model`` to ``observed`` by minimizing masked MSE (+ regularizer).

    A ``validation_fraction`` slice of the observed entries is held out
    (seeded by ``config.seed``) and drives early stopping; it never enters
    the gradient. The model is returned at its best validation epoch.
    """
    config = config or TrainConfig()
    if tuple(model.shape) != tuple(observed.shape):
        raise ValueError(f"model shape {model.shape} does not match data shape {observed.shape}")
    if observed.nnz == 0:
        raise ValueError("cannot train on an empty sparse tensor")
    if config.validation_fraction > 0 and observed.nnz >= 2:
        fit, val = split_entries(observed, SplitSpec(config.seed, 1.0 - config.validation_fraction))
        if val.nnz == 0:
            val = None
    else:
        fit, val = observed, None
    reg = _regularizer(config.regularizer)

    def objective():
        loss, grads = masked_mse_gradient(model, fit)
        if reg is not None:
            loss += reg.penalty(model)
            for k, g in reg.gradient(model).items():
                grads[k] += g
        return loss, grads

    validate = (lambda: masked_mse(model, val)) if val is not None else None
    trace = optimize(model.params, objective, config, validate)
    trace.model = model
    if trace.stop_reason == "divergence":
        log.warning("training diverged at epoch %d; returning best-so-far model", len(trace.epochs) - 1)
    return trace


def naive_baseline(observed: SparseTensor, seed: int = 0) -> DenseTensor:
    """Fill every missing entry with a uniformly drawn observed value."""
    if observed.nnz == 0:
        raise ValueError("naive baseline needs at least one observed entry")
    rng = np.random.default_rng(seed)
    out = rng.choice(observed.values, size=observed.size, replace=True)
    out[observed.flat_indices] = observed.values
    return DenseTensor(out.reshape(observed.shape), name=observed.name)


# all entries observed, so no validation split; longer budget than completion
DECOMPOSE_CONFIG = TrainConfig(lr=0.01, max_epochs=6000, patience=200, tol=1e-9, validation_fraction=0.0)


def decompose_dense(dense: DenseTensor, rank: int, config: TrainConfig | None = None, init=None):
    """Fit a rank-``rank`` CP model to every entry of ``dense``.

    Returns ``(model, normalized_error, trace)``. Poor fits show up in the
    error, not as exceptions.
    """
    if int(rank) < 1:
        raise ValueError(f"decomposition rank must be >= 1, got {rank}")
    config = config or DECOMPOSE_CONFIG
    init = init or ModelInit(seed=config.seed)
    model = init_model("cp", dense.shape, int(rank), init)
    trace = train(model, dense.to_sparse(), config)
    err = normalized_error(model.reconstruct(), dense)
    return model, err, trace


RESTART_SEED_OFFSET = 7919


def fit_model(family: str, observed: SparseTensor, rank, config: TrainConfig | None = None,
              init: ModelInit | None = None, **model_config):
    """Initialize and train one completion model.

    Neural models get one automatic restart with a fresh seed when
    training ends above the initial loss (a failure to converge).
    Returns ``(model, trace, restarted)``.
    """
    config = config or TrainConfig()
    init = init or ModelInit(seed=config.seed)
    model = init_model(family, observed.shape, rank, init, **model_config)
    trace = train(model, observed, config)
    restarted = False
    if model.family == "neural" and not trace.final_loss < trace.initial_loss:
        log.info("neural model failed to converge (seed %d); restarting", init.seed)
        init = replace(init, seed=init.seed + RESTART_SEED_OFFSET)
        model = init_model(family, observed.shape, rank, init, **model_config)
        trace = train(model, observed, config)
        restarted = True
    return model, trace, restarted
