"""Hyperparameter-grid tensors: every cell is the holdout F1 of one
learner configuration on a fixed synthetic classification task."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..tensor import DenseTensor
from .learners import DecisionTree, TinyMLP, f1_score, knn_predict, make_blobs

__all__ = ["GridAxis", "geometric_axis", "LEARNER_AXES", "default_axes", "generate_hpo_grid"]


@dataclass(frozen=True)
class GridAxis:
    name: str
    values: tuple
    spacing: str = "explicit"

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if len(self.values) < 2:
            raise ValueError(f"axis {self.name!r} needs at least two values")

    def __len__(self):
        return len(self.values)


def geometric_axis(name: str, lo: float, hi: float, n: int, integer: bool = False) -> GridAxis:
    """``n`` geometrically spaced values from ``lo`` to ``hi``."""
    vals = np.geomspace(lo, hi, n)
    if integer:
        vals = np.unique(np.round(vals).astype(int))
        return GridAxis(name, tuple(int(v) for v in vals), "geometric")
    return GridAxis(name, tuple(float(v) for v in vals), "geometric")


# axis name -> value used when the axis is not part of the grid
LEARNER_AXES = {
    "knn": {"k": 5, "p": 2.0, "weights": "uniform"},
    "tree": {"max_depth": 3, "min_leaf": 1, "max_features": 1.0},
    "mlp": {"layers": 1, "hidden": 8, "epochs": 50, "lr": 0.1},
}


def default_axes(learner: str) -> list:
    """Reduced-range grids mirroring the usual tuning axes."""
    if learner == "knn":
        return [GridAxis("k", (1, 2, 3, 5, 8, 13, 21, 34)), GridAxis("p", (1.0, 1.5, 2.0, 3.0)),
                GridAxis("weights", ("uniform", "distance"))]
    if learner == "tree":
        return [GridAxis("max_depth", (1, 2, 3, 4, 5, 6)), GridAxis("min_leaf", (1, 2, 4, 8, 16)),
                GridAxis("max_features", (0.25, 0.5, 0.75, 1.0))]
    if learner == "mlp":
        return [GridAxis("layers", (1, 2)), GridAxis("hidden", (2, 4, 8, 16)),
                GridAxis("epochs", (10, 30, 100)), geometric_axis("lr", 0.01, 1.0, 4)]
    raise ValueError(f"unknown learner {learner!r}")


def _cell_seed(data_seed: int, flat: int) -> int:
    return int(np.random.SeedSequence([int(data_seed), int(flat)]).generate_state(1)[0])


def _evaluate(learner, cfg, data, seed):
    x_tr, y_tr, x_te, y_te = data
    flag = None
    if learner == "knn":
        k = int(cfg["k"])
        if k > len(x_tr):
            flag, k = f"k={k} clamped to {len(x_tr)}", len(x_tr)
        if k < 1:
            flag, k = f"k={k} clamped to 1", 1
        pred = knn_predict(x_tr, y_tr, x_te, k, float(cfg["p"]), cfg["weights"])
    elif learner == "tree":
        pred = DecisionTree(cfg["max_depth"], cfg["min_leaf"], cfg["max_features"], seed).fit(x_tr, y_tr).predict(x_te)
    else:
        pred = TinyMLP(cfg["layers"], cfg["hidden"], cfg["epochs"], cfg["lr"], seed).fit(x_tr, y_tr).predict(x_te)
    return f1_score(y_te, pred), flag


def generate_hpo_grid(axes, learner: str, data_seed: int = 0, name: str = "", **data_kw) -> DenseTensor:
    """Exhaustively evaluate ``learner`` over the product of ``axes``.

    Axis names must be hyperparameters of ``learner`` (see
    :data:`LEARNER_AXES`); the rest stay at their defaults. Degenerate
    configurations are clamped and listed in ``meta["flags"]``.
    """
    if learner not in LEARNER_AXES:
        raise ValueError(f"learner must be one of {sorted(LEARNER_AXES)}, got {learner!r}")
    axes = [a if isinstance(a, GridAxis) else GridAxis(*a) for a in axes]
    for a in axes:
        if a.name not in LEARNER_AXES[learner]:
            raise ValueError(f"{a.name!r} is not a hyperparameter of {learner}")
    if len({a.name for a in axes}) != len(axes):
        raise ValueError("duplicate axis names")
    data = make_blobs(seed=data_seed, **data_kw)
    shape = tuple(len(a) for a in axes)
    out = np.empty(shape)
    flags = []
    for flat, combo in enumerate(itertools.product(*[range(len(a)) for a in axes])):
        cfg = dict(LEARNER_AXES[learner])
        cfg.update({a.name: a.values[i] for a, i in zip(axes, combo)})
        score, flag = _evaluate(learner, cfg, data, _cell_seed(data_seed, flat))
        out[combo] = score
        if flag:
            flags.append({"index": list(combo), "reason": flag})
    meta = {
        "generator": "hpo",
        "learner": learner,
        "data_seed": int(data_seed),
        "axes": [{"name": a.name, "values": list(a.values), "spacing": a.spacing} for a in axes],
        "flags": flags,
        "n_train": int(len(data[1])),
        "n_test": int(len(data[3])),
    }
    return DenseTensor(out, name=name or f"hpo_{learner}", meta=meta)
