"""JSON run configs: strict parsing into the library's dataclasses.

Unknown keys are rejected with a :class:`ConfigError` naming the key, so a
typo never silently falls back to a default.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .datagen import (
    GridAxis,
    Predicate,
    QueryTemplate,
    default_axes,
    generate_hpo_grid,
    generate_lowrank,
    generate_query_tensor,
    generate_smooth,
    make_table,
)
from .ensemble import AggregatorConfig
from .methods import MethodSpec, method
from .smoothness import SmoothnessConfig
from .sptn import read_tensor
from .tensor import DenseTensor
from .training import TrainConfig

__all__ = [
    "ConfigError",
    "load_json",
    "config_hash",
    "check_keys",
    "parse_train_config",
    "parse_method",
    "build_tensor",
    "load_dense",
]


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


def load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return doc


def config_hash(doc) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def check_keys(doc: dict, allowed, where: str, required=()) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    for k in doc:
        if k not in allowed:
            raise ConfigError(f"{where}: unknown key {k!r}", key=k)
    for k in required:
        if k not in doc:
            raise ConfigError(f"{where}: missing key {k!r}", key=k)


_TRAIN_KEYS = tuple(f for f in TrainConfig.__dataclass_fields__ if f != "regularizer")
_AGG_KEYS = tuple(AggregatorConfig.__dataclass_fields__)
_METHOD_KEYS = ("method", "label", "rank", "ranks", "lambda", "window", "sigma", "smooth_modes",
                "train", "init_scale", "channels", "hidden", "aggregator", "train_fraction",
                "aggregator_config", "threads")


def parse_train_config(doc: dict | None, where: str = "train") -> TrainConfig:
    doc = doc or {}
    check_keys(doc, _TRAIN_KEYS, where)
    try:
        return TrainConfig(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_method(doc, where: str = "method") -> MethodSpec:
    """A method name string, or an object like ``{"method": "cpd-s", "rank": 3, "lambda": 0.1}``."""
    if isinstance(doc, str):
        doc = {"method": doc}
    check_keys(doc, _METHOD_KEYS, where, required=("method",))
    name = doc["method"]
    kw = {}
    try:
        train = parse_train_config(doc.get("train"), f"{where}.train")
        smooth = None
        if any(k in doc for k in ("lambda", "window", "sigma", "smooth_modes")):
            smooth = SmoothnessConfig(lam=doc.get("lambda", 0.1), window=doc.get("window", 1),
                                      sigma=doc.get("sigma", 1.0), modes=doc.get("smooth_modes"))
        model_config = {k: doc[k] for k in ("channels", "hidden") if k in doc}
        if name.startswith("tensemble-"):
            if "ranks" in doc:
                kw["ranks"] = tuple(doc["ranks"])
            if "train_fraction" in doc:
                kw["train_fraction"] = doc["train_fraction"]
            if "threads" in doc:
                kw["threads"] = int(doc["threads"])
            if "aggregator_config" in doc:
                check_keys(doc["aggregator_config"], _AGG_KEYS, f"{where}.aggregator_config")
                kw["aggregator_config"] = AggregatorConfig(**doc["aggregator_config"])
            if smooth is not None:
                kw["smoothness"] = smooth
            kw.update(train_config=train, model_config=model_config)
            if "init_scale" in doc:
                kw["init_scale"] = doc["init_scale"]
        else:
            for k in ("ranks", "train_fraction", "threads", "aggregator_config"):
                if k in doc:
                    raise ConfigError(f"{where}: {k!r} only applies to tensemble methods", key=k)
            if "rank" in doc:
                kw["rank"] = doc["rank"]
            if smooth is not None:
                kw["smoothness"] = smooth
            kw.update(train=train, model_config=model_config)
            if "init_scale" in doc:
                kw["init_scale"] = doc["init_scale"]
        if "label" in doc:
            kw["label"] = doc["label"]
        return method(name, **kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_GEN_KEYS = {
    "lowrank": ("kind", "name", "shape", "rank", "noise", "seed"),
    "smooth": ("kind", "name", "shape", "frequency", "terms", "seed"),
    "hpo": ("kind", "name", "learner", "axes", "seed"),
    "query": ("kind", "name", "table", "predicates", "connectors", "distinct"),
}


def build_tensor(doc: dict, where: str = "generate") -> DenseTensor:
    """Generate a dense tensor from a generator spec object."""
    kind = doc.get("kind")
    if kind not in _GEN_KEYS:
        raise ConfigError(f"{where}: 'kind' must be one of {sorted(_GEN_KEYS)}", key="kind")
    check_keys(doc, _GEN_KEYS[kind], where)
    name = doc.get("name", "")
    seed = int(doc.get("seed", 0))
    try:
        if kind == "lowrank":
            return generate_lowrank(doc.get("shape", (10, 10, 10)), doc.get("rank", 3),
                                    doc.get("noise", 0.0), seed, name)
        if kind == "smooth":
            return generate_smooth(doc.get("shape", (10, 10, 10)), doc.get("frequency", 1.0),
                                   seed, doc.get("terms", 3), name)
        if kind == "hpo":
            learner = doc.get("learner", "knn")
            axes = doc.get("axes")
            if axes is None:
                axes = default_axes(learner)
            else:
                for i, a in enumerate(axes):
                    check_keys(a, ("name", "values"), f"{where}.axes[{i}]", required=("name", "values"))
                axes = [GridAxis(a["name"], a["values"]) for a in axes]
            return generate_hpo_grid(axes, learner, seed, name)
        table_doc = doc.get("table", {})
        check_keys(table_doc, ("rows", "seed"), f"{where}.table")
        table = make_table(table_doc.get("rows", 200), table_doc.get("seed", 0))
        preds = []
        for i, p in enumerate(doc.get("predicates", [])):
            check_keys(p, ("column", "op", "values"), f"{where}.predicates[{i}]", required=("column", "op", "values"))
            preds.append(Predicate(p["column"], p["op"], p["values"]))
        connectors = doc.get("connectors", ("AND",) * max(len(preds) - 1, 0))
        template = QueryTemplate(table, preds, connectors, doc.get("distinct"))
        return generate_query_tensor(template, name)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_dense(doc: dict, base: Path | None = None, where: str = "tensor") -> DenseTensor:
    """``{"path": ...}`` (a dense ``.sptn``) or ``{"generate": {...}}``."""
    check_keys(doc, ("name", "path", "generate"), where)
    if ("path" in doc) == ("generate" in doc):
        raise ConfigError(f"{where}: give exactly one of 'path' or 'generate'")
    if "generate" in doc:
        t = build_tensor(doc["generate"], f"{where}.generate")
    else:
        path = Path(doc["path"])
        if base is not None and not path.is_absolute():
            path = base / path
        t = read_tensor(path)
        if not isinstance(t, DenseTensor):
            raise ConfigError(f"{where}: {path} holds a sparse tensor; experiments need dense ground truth")
    if doc.get("name"):
        t = DenseTensor(t.values, name=doc["name"], meta=t.meta)
    return t
