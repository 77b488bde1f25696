"""Experiment procedures: method benchmarks, sparsity sweeps, smoothness
sensitivity, rank scans, cross-dataset completion and timing.

Every run samples observed entries with a recorded seed, completes the
tensor, and scores it on the unobserved complement only.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .methods import MethodSpec, complete, method
from .smoothness import SmoothnessConfig
from .sptn import atomic_write_text
from .tensor import (
    DenseTensor,
    ShapeError,
    SparseTensor,
    mae,
    normalized_error,
    rmse,
    sample_observed,
    unobserved_indices,
)
from .training import TrainConfig, decompose_dense

__all__ = [
    "REPORT_COLUMNS",
    "SWEEP_FRACTIONS",
    "LAMBDA_GRID",
    "ExperimentSpec",
    "ReportRow",
    "ExperimentReport",
    "evaluate",
    "run_benchmark",
    "sparsity_sweep",
    "lambda_sensitivity",
    "rank_scan",
    "stack_tensors",
    "cross_dataset_completion",
    "timing_report",
]

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("tensor", "method", "rank", "lambda", "fraction", "rep", "seed",
                  "mae", "rmse", "nerr", "seconds", "stop_reason")
SWEEP_FRACTIONS = (0.01, 0.025, 0.05, 0.10)
LAMBDA_GRID = (0.0, 0.01, 0.1, 1.0, 10.0)


@dataclass
class ExperimentSpec:
    """Tensors x methods x observed fractions x repetitions.

    The naive baseline is added automatically unless ``include_naive`` is
    false or a naive method is already listed. Repetition ``r`` uses seed
    ``seed + r`` for both sampling and training, so all methods see the
    same observed entries within a repetition.
    """

    tensors: list
    methods: list
    fractions: tuple = (0.05,)
    repetitions: int = 5
    seed: int = 0
    include_naive: bool = True

    def __post_init__(self):
        if isinstance(self.tensors, DenseTensor):
            self.tensors = [self.tensors]
        self.methods = [method(m) if isinstance(m, str) else m for m in self.methods]
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.tensors:
            raise ValueError("no tensors given")
        for f in self.fractions:
            if not 0 < f < 1:
                raise ValueError(f"observed fractions must lie in (0, 1), got {f}")
        if self.include_naive and not any(m.family == "naive" for m in self.methods):
            self.methods = [MethodSpec("naive")] + list(self.methods)


@dataclass
class ReportRow:
    tensor: str
    method: str
    rank: str
    lam: object
    fraction: float
    rep: int
    seed: int
    mae: float
    rmse: float
    nerr: float
    seconds: float
    stop_reason: str

    def as_csv_row(self) -> list:
        lam = "" if self.lam is None else repr(float(self.lam))
        return [self.tensor, self.method, self.rank, lam, repr(self.fraction), self.rep, self.seed,
                repr(self.mae), repr(self.rmse), repr(self.nerr), f"{self.seconds:.6f}", self.stop_reason]


def _stats(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return {"mean": math.nan, "std": math.nan}
    return {"mean": float(np.mean(v)), "std": float(np.std(v, ddof=1)) if v.size > 1 else 0.0}


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def select(self, **match) -> list:
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in match.items())]

    def aggregate(self, keys=("tensor", "method", "fraction")) -> list:
        """Mean and std of each metric per group, in first-seen order."""
        groups: dict = {}
        for r in self.rows:
            groups.setdefault(tuple(getattr(r, k) for k in keys), []).append(r)
        out = []
        for key, rows in groups.items():
            agg = dict(zip(keys, key))
            agg["n"] = len(rows)
            for metric in ("mae", "rmse", "nerr", "seconds"):
                agg[metric] = _stats([getattr(r, metric) for r in rows])
            out.append(agg)
        return out

    def mean(self, metric: str = "mae", **match) -> float:
        return _stats([getattr(r, metric) for r in self.select(**match)])["mean"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow(r.as_csv_row())
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"rows": [asdict(r) for r in self.rows], "aggregates": self.aggregate(), "extras": self.extras}
        return json.dumps(doc, indent=2, default=_json_default) + "\n"

    def write(self, csv_path, json_path=None) -> None:
        atomic_write_text(csv_path, self.to_csv())
        if json_path is None:
            json_path = str(csv_path).rsplit(".", 1)[0] + ".json"
        atomic_write_text(json_path, self.to_json())

    def timing(self) -> list:
        """Mean/std seconds per (tensor, method, fraction).

        For ensembles, ``ideal_parallel_seconds`` divides by the number of
        bases, i.e. the runtime if bases trained concurrently.
        """
        out = []
        for agg in self.aggregate():
            row = {k: agg[k] for k in ("tensor", "method", "fraction", "n")}
            row["seconds_mean"] = agg["seconds"]["mean"]
            row["seconds_std"] = agg["seconds"]["std"]
            n_bases = self.extras.get("n_bases", {}).get(agg["method"])
            row["ideal_parallel_seconds"] = agg["seconds"]["mean"] / n_bases if n_bases else None
            out.append(row)
        return out


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def evaluate(prediction: DenseTensor, truth: DenseTensor, observed: SparseTensor) -> dict:
    """Error metrics over the entries *not* in ``observed``."""
    over = unobserved_indices(observed)
    return {
        "mae": mae(prediction, truth, over),
        "rmse": rmse(prediction, truth, over),
        "nerr": normalized_error(prediction, truth, over),
    }


def _run_one(truth, observed, spec: MethodSpec, seed, fraction, rep) -> ReportRow:
    try:
        res = complete(observed, spec, seed)
        m = evaluate(res.prediction, truth, observed)
        stop = res.stop_reason + (";restarted" if res.restarted else "")
        seconds = res.seconds
    except Exception as exc:  # recorded in the report; the sweep goes on
        log.exception("run failed: %s on %s (seed %d)", spec.name, truth.name, seed)
        m = {"mae": math.nan, "rmse": math.nan, "nerr": math.nan}
        stop, seconds = f"error: {exc}", math.nan
    return ReportRow(truth.name, spec.name, spec.rank_label, spec.lam, fraction, rep, seed,
                     m["mae"], m["rmse"], m["nerr"], seconds, stop)


def run_benchmark(spec: ExperimentSpec) -> ExperimentReport:
    """Every tensor x method x fraction x repetition."""
    report = ExperimentReport()
    for k, truth in enumerate(spec.tensors):
        if not truth.name:
            truth = DenseTensor(truth.values, name=f"tensor{k}", meta=truth.meta)
        for fraction in spec.fractions:
            for rep in range(spec.repetitions):
                seed = spec.seed + rep
                observed = sample_observed(truth, fraction, seed)
                for m in spec.methods:
                    report.rows.append(_run_one(truth, observed, m, seed, fraction, rep))
    report.extras["n_bases"] = {m.name: len(m.ensemble.ranks) for m in spec.methods if m.family == "tensemble"}
    return report


def sparsity_sweep(tensors, methods, fractions=SWEEP_FRACTIONS, repetitions: int = 5, seed: int = 0,
                   include_naive: bool = True) -> ExperimentReport:
    return run_benchmark(ExperimentSpec(tensors, methods, tuple(fractions), repetitions, seed, include_naive))


def lambda_sensitivity(tensor: DenseTensor, lambdas=LAMBDA_GRID, fraction: float = 0.05,
                       repetitions: int = 5, seed: int = 0, rank: int = 3,
                       smoothness: SmoothnessConfig | None = None, train: TrainConfig | None = None,
                       include_reference: bool = True) -> ExperimentReport:
    """CPD-S at each smoothness weight; ``lam = 0`` is plain CPD.

    With ``include_reference``, plain CPD and the naive baseline are
    reported alongside for comparison.
    """
    base = smoothness or SmoothnessConfig()
    train = train or TrainConfig()
    methods = [MethodSpec("cpd-s", name="cpd-s", rank=rank, smoothness=replace(base, lam=float(lam)), train=train)
               for lam in lambdas]
    if include_reference:
        methods = [MethodSpec("cpd", rank=rank, train=train)] + methods
    spec = ExperimentSpec([tensor], methods, (fraction,), repetitions, seed, include_naive=include_reference)
    return run_benchmark(spec)


def rank_scan(dense: DenseTensor, ranks, config: TrainConfig | None = None) -> list:
    """``[(rank, normalized_error)]`` from fitting CP to the full tensor."""
    return [(int(r), float(decompose_dense(dense, int(r), config)[1])) for r in ranks]


def stack_tensors(tensors) -> DenseTensor:
    """Stack same-shape tensors along a new leading "dataset" mode."""
    tensors = list(tensors)
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"tensors to stack must share one shape, got {sorted(shapes)}")
    return DenseTensor(np.stack([t.values for t in tensors]), name="+".join(t.name for t in tensors))


def sample_stacked(tensors, target: int, target_fraction: float, context_fraction: float, seed: int):
    """Observed entries of the stacked tensor.

    The target slice gets exactly the entries ``sample_observed`` draws for
    it alone with ``seed``, so joint and single-tensor runs see the same
    target observations.
    """
    idx, vals = [], []
    for k, t in enumerate(tensors):
        if k == target:
            s = sample_observed(t, target_fraction, seed)
        else:
            s = sample_observed(t, context_fraction, seed + 1000 * (k + 1))
        idx.append(np.column_stack([np.full(s.nnz, k), s.indices]))
        vals.append(s.values)
    shape = (len(tensors),) + tuple(tensors[0].shape)
    return SparseTensor(shape, np.concatenate(idx), np.concatenate(vals))


def _without_dataset_smoothing(spec: MethodSpec, order: int) -> MethodSpec:
    # the dataset axis is categorical; smoothing it would impose a fake order
    modes = tuple(range(1, order))
    if spec.family == "cpd-s" and spec.smoothness.modes is None:
        return replace(spec, smoothness=replace(spec.smoothness, modes=modes))
    if spec.family == "tensemble" and spec.ensemble.family == "cpd-s" and spec.ensemble.smoothness.modes is None:
        ens = replace(spec.ensemble, smoothness=replace(spec.ensemble.smoothness, modes=modes))
        return replace(spec, ensemble=ens)
    return spec


def cross_dataset_completion(tensors, target: int = 0, target_fraction: float = 0.01,
                             context_fraction: float = 0.15, spec: MethodSpec | str = "tensemble-cpd-s-mlp",
                             repetitions: int = 5, seed: int = 0) -> ExperimentReport:
    """Joint completion with a dataset mode vs completing the target alone.

    Rows are labelled ``"<method>+dataset"`` (joint) and ``"<method>"``
    (single). Both are scored on the target slice's unobserved entries.
    With a single tensor there is nothing to stack and the joint run is
    the single-tensor run.
    """
    tensors = list(tensors)
    if len({t.shape for t in tensors}) != 1:
        raise ShapeError("all tensors must share one shape")
    spec = method(spec) if isinstance(spec, str) else spec
    truth = tensors[target]
    name = truth.name or f"tensor{target}"
    report = ExperimentReport()
    for rep in range(repetitions):
        s = seed + rep
        single_obs = sample_observed(truth, target_fraction, s)
        single = _run_one(DenseTensor(truth.values, name=name), single_obs, spec, s, target_fraction, rep)
        if len(tensors) == 1:
            joint = replace(single, method=f"{spec.name}+dataset")
        else:
            joint = _joint_run(tensors, target, target_fraction, context_fraction, spec, s, rep, name)
        report.rows.extend([joint, single])
    report.extras.update(target=target, context_fraction=context_fraction, n_tensors=len(tensors))
    return report


def _joint_run(tensors, target, target_fraction, context_fraction, spec, seed, rep, name):
    observed = sample_stacked(tensors, target, target_fraction, context_fraction, seed)
    joint_spec = _without_dataset_smoothing(spec, observed.order)
    truth = tensors[target]
    try:
        res = complete(observed, joint_spec, seed)
        pred = DenseTensor(res.prediction.values[target])
        tgt_obs = sample_observed(truth, target_fraction, seed)
        m = evaluate(pred, truth, tgt_obs)
        stop, seconds = res.stop_reason, res.seconds
    except Exception as exc:
        log.exception("joint run failed (seed %d)", seed)
        m = {"mae": math.nan, "rmse": math.nan, "nerr": math.nan}
        stop, seconds = f"error: {exc}", math.nan
    return ReportRow(name, f"{spec.name}+dataset", spec.rank_label, spec.lam, target_fraction, rep, seed,
                     m["mae"], m["rmse"], m["nerr"], seconds, stop)


def timing_report(spec: ExperimentSpec) -> ExperimentReport:
    """Benchmark whose interesting output is ``report.timing()``.

    Wall-clock numbers depend on the host and carry no thresholds.
    """
    report = run_benchmark(spec)
    report.extras["timing"] = report.timing()
    return report


def spec_dict(spec: ExperimentSpec) -> dict:
    """JSON-friendly description of an experiment (tensor names only)."""
    return {
        "tensors": [t.name for t in spec.tensors],
        "methods": [asdict(m) for m in spec.methods],
        "fractions": list(spec.fractions),
        "repetitions": spec.repetitions,
        "seed": spec.seed,
    }
