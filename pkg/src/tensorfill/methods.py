"""Named completion methods and a single ``complete`` entry point."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

from .ensemble import EnsembleSpec, train_ensemble
from .models import ModelInit
from .smoothness import SmoothnessConfig
from .tensor import DenseTensor, SparseTensor
from .training import TrainConfig, fit_model, naive_baseline

__all__ = ["METHOD_FAMILIES", "MethodSpec", "CompletionResult", "method", "complete"]

METHOD_FAMILIES = ("naive", "cpd", "cpd-s", "tucker", "tt", "costco", "tensemble")

_DEFAULT_RANK = {"cpd": 3, "cpd-s": 3, "tucker": 3, "tt": 3, "costco": 10}
_DEFAULT_ENSEMBLE_RANKS = {"cpd": (1, 3, 5), "cpd-s": (1, 3, 5), "costco": (10, 20, 32)}
_MODEL_FAMILY = {"cpd": "cp", "cpd-s": "cp", "tucker": "tucker", "tt": "tt", "costco": "neural"}


@dataclass(frozen=True)
class MethodSpec:
    """One completion method with its full configuration.

    ``family`` is one of :data:`METHOD_FAMILIES`. ``rank`` applies to the
    single-model families; ``ensemble`` configures ``"tensemble"``.
    """

    family: str
    name: str = ""
    rank: object = None
    smoothness: SmoothnessConfig | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    init_scale: float = 0.5
    model_config: dict = field(default_factory=dict)
    ensemble: EnsembleSpec | None = None

    def __post_init__(self):
        if self.family not in METHOD_FAMILIES:
            raise ValueError(f"unknown method family {self.family!r}; expected one of {METHOD_FAMILIES}")
        if self.rank is None and self.family in _DEFAULT_RANK:
            object.__setattr__(self, "rank", _DEFAULT_RANK[self.family])
        if self.family == "cpd-s" and self.smoothness is None:
            object.__setattr__(self, "smoothness", SmoothnessConfig())
        if self.family == "tensemble" and self.ensemble is None:
            object.__setattr__(self, "ensemble", EnsembleSpec())
        if not self.name:
            object.__setattr__(self, "name", self.default_name())

    def default_name(self) -> str:
        if self.family == "tensemble":
            e = self.ensemble
            return f"tensemble-{e.family}-{e.aggregator}"
        return self.family

    @property
    def lam(self):
        if self.family == "cpd-s":
            return self.smoothness.lam
        if self.family == "tensemble" and self.ensemble.family == "cpd-s":
            return self.ensemble.smoothness.lam
        return None

    @property
    def rank_label(self) -> str:
        if self.family == "tensemble":
            return "/".join(map(str, self.ensemble.ranks))
        if self.rank is None:
            return ""
        return "/".join(map(str, self.rank)) if isinstance(self.rank, (list, tuple)) else str(self.rank)


def method(name: str, **overrides) -> MethodSpec:
    """Build a :class:`MethodSpec` from a short name.

    Names: ``naive``, ``cpd``, ``cpd-s``, ``tucker``, ``tt``, ``costco`` and
    ``tensemble-<cpd|cpd-s|costco>-<mean|median|max|min|mlp>``.

    >>> method("tensemble-cpd-s-mlp").ensemble.ranks
    (1, 3, 5)
    """
    if name.startswith("tensemble-"):
        rest = name[len("tensemble-"):]
        base, _, agg = rest.rpartition("-")
        if base not in _DEFAULT_ENSEMBLE_RANKS:
            raise ValueError(f"unknown ensemble method {name!r}")
        ens_kw = {k: overrides.pop(k) for k in list(overrides) if k in EnsembleSpec.__dataclass_fields__}
        ens_kw.setdefault("ranks", _DEFAULT_ENSEMBLE_RANKS[base])
        ens = EnsembleSpec(family=base, aggregator=agg, **ens_kw)
        return MethodSpec("tensemble", name=overrides.pop("label", name), ensemble=ens, **overrides)
    return MethodSpec(name, name=overrides.pop("label", name), **overrides)


@dataclass
class CompletionResult:
    prediction: DenseTensor
    seconds: float
    stop_reason: str
    model: object = None
    restarted: bool = False


def complete(observed: SparseTensor, spec: MethodSpec, seed: int = 0) -> CompletionResult:
    """Recover the full tensor from ``observed`` with ``spec``.

    ``seed`` drives initialization, validation splits and (for the naive
    baseline) the fill draws. ``seconds`` covers training and inference.
    """
    t0 = time.perf_counter()
    restarted = False
    if spec.family == "naive":
        pred, model, stop = naive_baseline(observed, seed), None, ""
    elif spec.family == "tensemble":
        ens_spec = replace(spec.ensemble, seed=seed, train_config=spec.ensemble.train_config.with_(seed=seed))
        model = train_ensemble(observed, ens_spec)
        pred = model.reconstruct()
        stop = ";".join(i.stop_reason for i in model.info)
        restarted = any(i.restarted for i in model.info)
    else:
        config = spec.train.with_(seed=seed, regularizer=spec.smoothness if spec.family == "cpd-s" else None)
        model, trace, restarted = fit_model(
            _MODEL_FAMILY[spec.family], observed, spec.rank, config,
            ModelInit(seed=seed, scale=spec.init_scale), **spec.model_config,
        )
        pred, stop = model.reconstruct(), trace.stop_reason
    seconds = time.perf_counter() - t0
    return CompletionResult(DenseTensor(pred.values, name=observed.name), seconds, stop, model, restarted)
