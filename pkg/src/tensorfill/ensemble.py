"""TenSemble: ensembles of completion models with differing ranks and data
splits, combined per entry by a fixed statistic or a learned MLP.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .models import ModelInit, dumps_model, loads_model
from .smoothness import SmoothnessConfig
from .sptn import atomic_write_text, format_value, parse_value
from .tensor import DenseTensor, SparseTensor, SplitSpec, all_indices, split_entries
from .training import TrainConfig, fit_model, optimize

__all__ = [
    "FIXED_AGGREGATORS",
    "EnsembleError",
    "AggregatorConfig",
    "EnsembleSpec",
    "AggregatorMLP",
    "BaseInfo",
    "EnsembleModel",
    "aggregate_fixed",
    "train_ensemble",
    "fit_aggregator",
    "save_ensemble",
    "load_ensemble",
]

log = logging.getLogger(__name__)

FIXED_AGGREGATORS = {
    "mean": np.mean,
    "median": np.median,
    "max": np.max,
    "min": np.min,
}
_BASE_FAMILIES = {"cpd": "cp", "cpd-s": "cp", "costco": "neural"}


class EnsembleError(RuntimeError):
    pass


def aggregate_fixed(predictions, kind: str = "median"):
    """Combine base predictions along the last axis.

    >>> aggregate_fixed([0.2, 0.8], "median")
    0.5
    """
    p = np.asarray(predictions, dtype=np.float64)
    if p.size == 0 or p.shape[-1] == 0:
        raise ValueError("cannot aggregate an empty set of predictions")
    if kind not in FIXED_AGGREGATORS:
        raise ValueError(f"unknown aggregator {kind!r}; expected one of {sorted(FIXED_AGGREGATORS)}")
    out = FIXED_AGGREGATORS[kind](p, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class AggregatorConfig:
    hidden: int = 16
    lr: float = 0.005
    max_epochs: int = 2000
    patience: int = 100
    tol: float = 1e-7
    validation_fraction: float = 0.1
    init_scale: float = 0.1


@dataclass(frozen=True)
class EnsembleSpec:
    """What to train and how to combine it.

    ``family`` is ``"cpd"``, ``"cpd-s"`` or ``"costco"``. Base ``j`` uses
    rank ``ranks[j]`` and seed ``base_seeds[j]`` (default ``seed + j``),
    which drives both its data split and its initialization.
    """

    family: str = "cpd"
    ranks: tuple = (1, 3, 5)
    train_fraction: float = 0.9
    aggregator: str = "median"
    seed: int = 0
    base_seeds: tuple | None = None
    smoothness: SmoothnessConfig | None = None
    train_config: TrainConfig = field(default_factory=TrainConfig)
    aggregator_config: AggregatorConfig = field(default_factory=AggregatorConfig)
    model_config: dict = field(default_factory=dict)
    init_scale: float = 0.5
    threads: int = 1

    def __post_init__(self):
        if self.family not in _BASE_FAMILIES:
            raise ValueError(f"unknown ensemble family {self.family!r}")
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
        if len(self.ranks) < 2:
            raise ValueError("an ensemble needs at least two base models")
        if any(r < 1 for r in self.ranks):
            raise ValueError(f"ranks must be positive, got {self.ranks}")
        if self.aggregator not in FIXED_AGGREGATORS and self.aggregator != "mlp":
            raise ValueError(f"unknown aggregator {self.aggregator!r}")
        if not 0 < self.train_fraction <= 1:
            raise ValueError("train_fraction must be in (0, 1]")
        if self.base_seeds is not None:
            object.__setattr__(self, "base_seeds", tuple(int(s) for s in self.base_seeds))
            if len(self.base_seeds) != len(self.ranks):
                raise ValueError("base_seeds must match ranks in length")
        if self.family == "cpd-s" and self.smoothness is None:
            object.__setattr__(self, "smoothness", SmoothnessConfig())

    def seeds(self) -> tuple:
        return self.base_seeds or tuple(self.seed + j for j in range(len(self.ranks)))


class AggregatorMLP:
    """One-hidden-layer rectifier network mapping base predictions to a value."""

    def __init__(self, params: dict):
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

    @property
    def n_inputs(self) -> int:
        return self.params["w1"].shape[0]

    @property
    def hidden(self) -> int:
        return self.params["w1"].shape[1]

    @classmethod
    def identity(cls, n_inputs: int, j: int, hidden: int = 16) -> AggregatorMLP:
        """Network that outputs input ``j`` exactly: ``relu(x) - relu(-x)``."""
        if hidden < 2:
            raise ValueError("identity initialization needs at least two hidden units")
        w1 = np.zeros((n_inputs, hidden))
        w1[j, 0], w1[j, 1] = 1.0, -1.0
        w2 = np.zeros(hidden)
        w2[0], w2[1] = 1.0, -1.0
        return cls({"w1": w1, "b1": np.zeros(hidden), "w2": w2, "b2": np.zeros(1)})

    def _forward(self, x):
        p = self.params
        z = np.einsum("mi,ih->mh", x, p["w1"], optimize=False) + p["b1"]
        a = np.maximum(z, 0.0)
        y = np.einsum("mh,h->m", a, p["w2"], optimize=False) + p["b2"][0]
        return y, z, a

    def __call__(self, features) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        return self._forward(x)[0]

    def gradient(self, features, upstream) -> dict:
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        _, z, a = self._forward(x)
        u = np.asarray(upstream, dtype=np.float64)
        d = u[:, None] * self.params["w2"][None, :] * (z > 0)
        return {
            "w1": np.einsum("mi,mh->ih", x, d, optimize=False),
            "b1": d.sum(axis=0),
            "w2": np.einsum("m,mh->h", u, a, optimize=False),
            "b2": np.array([u.sum()]),
        }


@dataclass
class BaseInfo:
    rank: int
    seed: int
    excluded: np.ndarray  # flat indices of observed entries this base never saw
    stop_reason: str = ""
    epochs: int = 0
    restarted: bool = False
    diverged: bool = False


class EnsembleModel:
    """Frozen base models plus an aggregator."""

    def __init__(self, bases, aggregator: str = "median", mlp: AggregatorMLP | None = None,
                 info: list | None = None, shape=None):
        if len(bases) < 1:
            raise ValueError("ensemble has no base models")
        self.bases = list(bases)
        self.shape = tuple(shape or self.bases[0].shape)
        if any(tuple(b.shape) != self.shape for b in self.bases):
            raise ValueError("all base models must share one shape")
        if aggregator not in FIXED_AGGREGATORS and aggregator != "mlp":
            raise ValueError(f"unknown aggregator {aggregator!r}")
        if aggregator == "mlp" and mlp is None:
            mlp = AggregatorMLP.identity(len(self.bases), 0)
        self.aggregator = aggregator
        self.mlp = mlp
        self.info = info or []

    @property
    def n_bases(self) -> int:
        return len(self.bases)

    def base_predictions(self, indices) -> np.ndarray:
        """``(M, n_bases)`` matrix of base predictions."""
        return np.stack([b.predict(indices) for b in self.bases], axis=1)

    def combine(self, features) -> np.ndarray:
        if self.aggregator == "mlp":
            return self.mlp(features)
        return np.asarray(aggregate_fixed(features, self.aggregator)).reshape(-1)

    def predict(self, indices) -> np.ndarray:
        return self.combine(self.base_predictions(indices))

    def predict_entry(self, index) -> float:
        return float(self.predict(np.asarray(index, dtype=np.int64).reshape(1, -1))[0])

    def reconstruct(self, shape=None) -> DenseTensor:
        if shape is not None and tuple(shape) != self.shape:
            raise ValueError(f"ensemble shape {self.shape} does not match {tuple(shape)}")
        return DenseTensor(self.predict(all_indices(self.shape)).reshape(self.shape))

    def with_aggregator(self, aggregator: str, mlp: AggregatorMLP | None = None) -> EnsembleModel:
        """Same bases, different combination rule."""
        return EnsembleModel(self.bases, aggregator, mlp, self.info, self.shape)


def _train_base(observed: SparseTensor, spec: EnsembleSpec, j: int):
    seed = spec.seeds()[j]
    part, held = split_entries(observed, SplitSpec(seed, spec.train_fraction, role="base-model-exclusion"))
    config = spec.train_config.with_(seed=seed, regularizer=spec.smoothness if spec.family == "cpd-s" else None)
    model, trace, restarted = fit_model(
        _BASE_FAMILIES[spec.family], part, spec.ranks[j], config,
        ModelInit(seed=seed, scale=spec.init_scale), **spec.model_config,
    )
    info = BaseInfo(spec.ranks[j], seed, held.flat_indices.copy(), trace.stop_reason,
                    len(trace.epochs), restarted, trace.stop_reason == "divergence")
    return model, info


def train_ensemble(observed: SparseTensor, spec: EnsembleSpec) -> EnsembleModel:
    """Train every base on its own seeded share of ``observed``, then
    fit the aggregator when it is learned.

    Bases that diverge are dropped; fewer than two survivors is an error.
    """
    if observed.nnz == 0:
        raise ValueError("cannot train an ensemble on an empty sparse tensor")
    jobs = range(len(spec.ranks))
    if spec.threads > 1:
        with ThreadPoolExecutor(max_workers=spec.threads) as pool:
            results = list(pool.map(lambda j: _train_base(observed, spec, j), jobs))
    else:
        results = [_train_base(observed, spec, j) for j in jobs]
    survivors = [(m, i) for m, i in results if not i.diverged]
    if len(survivors) < 2:
        raise EnsembleError(f"only {len(survivors)} of {len(results)} base models converged")
    for m, i in results:
        if i.diverged:
            log.warning("dropping diverged base (rank %d, seed %d)", i.rank, i.seed)
    ens = EnsembleModel([m for m, _ in survivors], spec.aggregator,
                        info=[i for _, i in survivors], shape=observed.shape)
    if spec.aggregator == "mlp":
        fit_aggregator(ens, observed, spec.aggregator_config, seed=spec.seed)
    return ens


def fit_aggregator(ensemble: EnsembleModel, observed: SparseTensor,
                   config: AggregatorConfig | None = None, seed: int = 0):
    """Train a learned aggregator on base predictions at observed entries.

    Features are the (frozen) base predictions, targets the observed
    values. A ``validation_fraction`` holdout drives early stopping and is
    never trained on. The network starts as an exact copy of the base with
    the lowest training error; the remaining hidden units start with small
    random input weights and zero output weights.

    Returns the training trace; ``ensemble`` is switched to the MLP.
    """
    config = config or AggregatorConfig()
    if config.validation_fraction > 0 and observed.nnz >= 2:
        fit, val = split_entries(observed, SplitSpec(seed, 1.0 - config.validation_fraction))
    else:
        fit, val = observed, None
    if val is not None and val.nnz == 0:
        val = None
    x_fit, y_fit = ensemble.base_predictions(fit.indices), fit.values
    x_val = ensemble.base_predictions(val.indices) if val is not None else None

    best = int(np.argmin(np.mean((x_fit - y_fit[:, None]) ** 2, axis=0)))
    mlp = AggregatorMLP.identity(ensemble.n_bases, best, max(2, config.hidden))
    rng = np.random.default_rng(seed)
    mlp.params["w1"][:, 2:] = rng.uniform(-config.init_scale, config.init_scale,
                                          size=mlp.params["w1"][:, 2:].shape)

    def objective():
        r = mlp(x_fit) - y_fit
        return float(np.mean(r * r)), mlp.gradient(x_fit, (2.0 / r.size) * r)

    def validate():
        r = mlp(x_val) - val.values
        return float(np.mean(r * r))

    train_cfg = TrainConfig(lr=config.lr, max_epochs=config.max_epochs, patience=config.patience,
                            tol=config.tol, seed=seed, validation_fraction=0.0)
    trace = optimize(mlp.params, objective, train_cfg, validate if val is not None else None)
    ensemble.aggregator = "mlp"
    ensemble.mlp = mlp
    return trace


def save_ensemble(ensemble: EnsembleModel, directory) -> Path:
    """Write base checkpoints, the aggregator and a ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    bases = []
    for j, b in enumerate(ensemble.bases):
        name = f"base{j}.ckpt"
        atomic_write_text(directory / name, dumps_model(b))
        entry = {"checkpoint": name}
        if j < len(ensemble.info):
            i = ensemble.info[j]
            entry.update(rank=i.rank, seed=i.seed, stop_reason=i.stop_reason,
                         restarted=i.restarted, excluded=i.excluded.tolist())
        bases.append(entry)
    manifest = {"shape": list(ensemble.shape), "aggregator": ensemble.aggregator, "bases": bases}
    if ensemble.aggregator == "mlp":
        p = ensemble.mlp.params
        header = {"kind": "aggregator-mlp", "params": [[k, list(v.shape)] for k, v in p.items()]}
        lines = [json.dumps(header, separators=(",", ":"))]
        lines += [format_value(v) for k in p for v in p[k].reshape(-1).tolist()]
        atomic_write_text(directory / "aggregator.ckpt", "\n".join(lines) + "\n")
        manifest["aggregator_checkpoint"] = "aggregator.ckpt"
    path = directory / "manifest.json"
    atomic_write_text(path, json.dumps(manifest, indent=2) + "\n")
    return path


def load_ensemble(directory) -> EnsembleModel:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    bases, info = [], []
    for entry in manifest["bases"]:
        bases.append(loads_model((directory / entry["checkpoint"]).read_text(encoding="utf-8")))
        if "rank" in entry:
            info.append(BaseInfo(entry["rank"], entry["seed"], np.asarray(entry["excluded"], dtype=np.int64),
                                 entry["stop_reason"], restarted=entry["restarted"]))
    mlp = None
    if manifest["aggregator"] == "mlp":
        lines = (directory / manifest["aggregator_checkpoint"]).read_text(encoding="utf-8").rstrip("\n").split("\n")
        header = json.loads(lines[0])
        vals = np.array([parse_value(v) for v in lines[1:]])
        params, pos = {}, 0
        for k, shp in header["params"]:
            n = int(np.prod(shp))
            params[k] = vals[pos:pos + n].reshape(shp)
            pos += n
        mlp = AggregatorMLP(params)
    return EnsembleModel(bases, manifest["aggregator"], mlp, info, manifest["shape"])
