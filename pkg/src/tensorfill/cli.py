"""``tensorfill`` command line.

Each subcommand reads a JSON config (flags override its fields), composes
library calls and writes its artifacts atomically. Failures print one JSON
object to stderr: exit code 2 for config/schema problems, 3 for I/O
problems, 1 for anything else.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    build_tensor,
    check_keys,
    config_hash,
    load_dense,
    load_json,
    parse_method,
    parse_train_config,
)
from .ensemble import save_ensemble, train_ensemble
from .harness import (
    LAMBDA_GRID,
    SWEEP_FRACTIONS,
    ExperimentSpec,
    cross_dataset_completion,
    evaluate,
    lambda_sensitivity,
    rank_scan,
    run_benchmark,
    timing_report,
)
from .methods import complete
from .smoothness import SmoothnessConfig
from .sptn import atomic_write_text, read_tensor, write_tensor
from .tensor import DenseTensor, SparseTensor, TensorError, sample_observed

log = logging.getLogger("tensorfill")

EXIT_CONFIG, EXIT_IO, EXIT_OTHER = 2, 3, 1


class _Run:
    """Per-invocation context: the effective config, seed and output mode."""

    def __init__(self, args, config: dict):
        self.args = args
        self.config = config
        self.seed = args.seed if args.seed is not None else int(config.get("seed", 0))

    def provenance(self) -> dict:
        effective = dict(self.config, seed=self.seed)
        return {"tool": "tensorfill", "version": __version__, "command": self.args.command,
                "config_sha256": config_hash(effective), "seed": self.seed}

    def emit(self, summary: dict) -> None:
        if self.args.json:
            print(json.dumps(summary, sort_keys=True, default=str))
        elif not self.args.quiet:
            for k, v in summary.items():
                print(f"{k}: {v}")


def _read_sparse(path) -> SparseTensor:
    t = read_tensor(path)
    return t.to_sparse() if isinstance(t, DenseTensor) else t


def _read_config(path) -> tuple[dict, Path | None]:
    if path is None:
        return {}, None
    return load_json(path), Path(path).resolve().parent


def _with_threads(spec, threads):
    if threads is None or spec.family != "tensemble":
        return spec
    return replace(spec, ensemble=replace(spec.ensemble, threads=threads))


def _report_csv(report, provenance) -> str:
    return "# " + json.dumps(provenance, sort_keys=True) + "\n" + report.to_csv()


def _write_report(report, out: Path, run: _Run, stem: str = "report") -> dict:
    prov = run.provenance()
    report.extras["provenance"] = prov
    atomic_write_text(out / f"{stem}.csv", _report_csv(report, prov))
    atomic_write_text(out / f"{stem}.json", report.to_json())
    return {"rows": len(report.rows), "csv": str(out / f"{stem}.csv"), "json": str(out / f"{stem}.json")}


def _summary_table(report) -> list:
    return [{"tensor": g["tensor"], "method": g["method"], "fraction": g["fraction"],
             "mae_mean": g["mae"]["mean"], "mae_std": g["mae"]["std"]}
            for g in report.aggregate()]


# -- commands ---------------------------------------------------------------

def cmd_generate(args) -> dict:
    doc, _ = _read_config(args.spec)
    doc = dict(doc)
    if args.seed is not None:
        if doc.get("kind") == "query":
            doc["table"] = dict(doc.get("table", {}), seed=args.seed)
        else:
            doc["seed"] = args.seed
    run = _Run(args, doc)
    tensor = build_tensor(doc)
    write_tensor(tensor, args.out, run.provenance())
    return {"out": args.out, "shape": list(tensor.shape), "name": tensor.name}


def cmd_sample(args) -> dict:
    run = _Run(args, {"fraction": args.fraction})
    dense = read_tensor(args.tensor)
    if not isinstance(dense, DenseTensor):
        raise ConfigError(f"{args.tensor} is already sparse; sample needs a dense tensor")
    observed = sample_observed(dense, args.fraction, run.seed)
    write_tensor(observed, args.out, run.provenance())
    return {"out": args.out, "nnz": observed.nnz, "fraction": observed.observed_fraction}


def _method_doc(args, doc: dict) -> dict:
    doc = dict(doc)
    for flag, key in (("method", "method"), ("rank", "rank"), ("lam", "lambda")):
        v = getattr(args, flag)
        if v is not None:
            doc[key] = v
    train = dict(doc.get("train", {}))
    for flag in ("lr", "max_epochs", "patience"):
        v = getattr(args, flag)
        if v is not None:
            train[flag] = v
    if train:
        doc["train"] = train
    doc.setdefault("method", "cpd")
    return doc


def cmd_complete(args) -> dict:
    doc, _ = _read_config(args.config)
    mdoc = _method_doc(args, {k: v for k, v in doc.items() if k != "seed"})
    run = _Run(args, dict(mdoc, seed=doc.get("seed", 0)))
    spec = _with_threads(parse_method(mdoc), args.threads)
    observed = _read_sparse(args.observed)
    res = complete(observed, spec, run.seed)
    write_tensor(res.prediction, args.out, run.provenance())
    summary = {"out": args.out, "method": spec.name, "seconds": round(res.seconds, 4),
               "stop_reason": res.stop_reason}
    if args.truth:
        truth = read_tensor(args.truth)
        if not isinstance(truth, DenseTensor):
            raise ConfigError("--truth must be a dense tensor")
        summary.update(evaluate(res.prediction, truth, observed))
    return summary


_ENSEMBLE_KEYS = ("method", "ranks", "lambda", "window", "sigma", "smooth_modes", "train", "init_scale",
                  "channels", "hidden", "train_fraction", "aggregator_config", "threads", "seed")


def cmd_ensemble(args) -> dict:
    doc, _ = _read_config(args.spec)
    check_keys(doc, _ENSEMBLE_KEYS, "ensemble")
    doc.setdefault("method", "tensemble-cpd-median")
    run = _Run(args, doc)
    mdoc = {k: v for k, v in doc.items() if k != "seed"}
    spec = _with_threads(parse_method(mdoc, "ensemble"), args.threads)
    if spec.family != "tensemble":
        raise ConfigError("ensemble: 'method' must be a tensemble-* method", key="method")
    ens_spec = replace(spec.ensemble, seed=run.seed, train_config=spec.ensemble.train_config.with_(seed=run.seed))
    observed = _read_sparse(args.observed)
    model = train_ensemble(observed, ens_spec)
    out = Path(args.out)
    save_ensemble(model, out)
    pred = model.reconstruct()
    write_tensor(DenseTensor(pred.values, name=observed.name), out / "prediction.sptn", run.provenance())
    atomic_write_text(out / "provenance.json", json.dumps(run.provenance(), indent=2, sort_keys=True) + "\n")
    return {"out": str(out), "bases": model.n_bases, "aggregator": model.aggregator}


_EXPERIMENT_KEYS = ("tensors", "methods", "fractions", "repetitions", "seed", "include_naive")


def _experiment(doc: dict, base, args, default_fractions) -> ExperimentSpec:
    check_keys(doc, _EXPERIMENT_KEYS, "experiment", required=("tensors", "methods"))
    tensors = [load_dense(t, base, f"tensors[{i}]") for i, t in enumerate(doc["tensors"])]
    methods = [_with_threads(parse_method(m, f"methods[{i}]"), args.threads) for i, m in enumerate(doc["methods"])]
    try:
        return ExperimentSpec(tensors, methods, tuple(doc.get("fractions", default_fractions)),
                              int(doc.get("repetitions", 5)),
                              args.seed if args.seed is not None else int(doc.get("seed", 0)),
                              bool(doc.get("include_naive", True)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"experiment: {exc}") from exc


def cmd_benchmark(args) -> dict:
    doc, base = _read_config(args.spec)
    spec = _experiment(doc, base, args, (0.05,))
    report = run_benchmark(spec)
    out = _write_report(report, Path(args.out), _Run(args, doc))
    out["summary"] = _summary_table(report)
    return out


def cmd_sweep(args) -> dict:
    doc, base = _read_config(args.spec)
    spec = _experiment(doc, base, args, SWEEP_FRACTIONS)
    report = run_benchmark(spec)
    out = _write_report(report, Path(args.out), _Run(args, doc))
    out["summary"] = _summary_table(report)
    return out


_LAMBDA_KEYS = ("tensor", "lambdas", "fraction", "repetitions", "seed", "rank", "window", "sigma",
                "smooth_modes", "train", "include_reference")


def cmd_lambda(args) -> dict:
    doc, base = _read_config(args.spec)
    check_keys(doc, _LAMBDA_KEYS, "lambda", required=("tensor",))
    run = _Run(args, doc)
    tensor = load_dense(doc["tensor"], base)
    smooth = SmoothnessConfig(window=doc.get("window", 1), sigma=doc.get("sigma", 1.0), modes=doc.get("smooth_modes"))
    report = lambda_sensitivity(tensor, tuple(doc.get("lambdas", LAMBDA_GRID)), doc.get("fraction", 0.05),
                                int(doc.get("repetitions", 5)), run.seed, doc.get("rank", 3), smooth,
                                parse_train_config(doc.get("train")), bool(doc.get("include_reference", True)))
    out = _write_report(report, Path(args.out), run)
    out["summary"] = [{"method": g["method"], "lambda": g["lam"], "mae_mean": g["mae"]["mean"]}
                      for g in report.aggregate(("method", "lam"))]
    return out


def cmd_rankscan(args) -> dict:
    doc, base = _read_config(args.spec)
    check_keys(doc, ("tensor", "ranks", "train", "seed"), "rankscan", required=("tensor",))
    run = _Run(args, doc)
    tensor = load_dense(doc["tensor"], base)
    train = doc.get("train")
    config = parse_train_config(dict(train, seed=run.seed) if train else None) if train else None
    scan = rank_scan(tensor, doc.get("ranks", list(range(1, 11))), config)
    buf = io.StringIO()
    buf.write("# " + json.dumps(run.provenance(), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "nerr"])
    for r, e in scan:
        w.writerow([r, repr(e)])
    path = Path(args.out) / "rankscan.csv"
    atomic_write_text(path, buf.getvalue())
    return {"csv": str(path), "scan": scan}


_CROSS_KEYS = ("tensors", "target", "target_fraction", "context_fraction", "method", "repetitions", "seed")


def cmd_crossdataset(args) -> dict:
    doc, base = _read_config(args.spec)
    check_keys(doc, _CROSS_KEYS, "crossdataset", required=("tensors",))
    run = _Run(args, doc)
    tensors = [load_dense(t, base, f"tensors[{i}]") for i, t in enumerate(doc["tensors"])]
    spec = _with_threads(parse_method(doc.get("method", "tensemble-cpd-s-mlp")), args.threads)
    report = cross_dataset_completion(tensors, int(doc.get("target", 0)), doc.get("target_fraction", 0.01),
                                      doc.get("context_fraction", 0.15), spec,
                                      int(doc.get("repetitions", 5)), run.seed)
    out = _write_report(report, Path(args.out), run)
    out["summary"] = _summary_table(report)
    return out


def cmd_timing(args) -> dict:
    doc, base = _read_config(args.spec)
    spec = _experiment(doc, base, args, (0.05,))
    report = timing_report(spec)
    run = _Run(args, doc)
    out = _write_report(report, Path(args.out), run)
    buf = io.StringIO()
    buf.write("# " + json.dumps(run.provenance(), sort_keys=True) + "\n")
    rows = report.extras["timing"]
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    atomic_write_text(Path(args.out) / "timing.csv", buf.getvalue())
    out["timing"] = rows
    return out


def _convert_json(doc: dict, name: str):
    check_keys(doc, ("name", "shape", "entries", "values"), "convert")
    if ("entries" in doc) == ("values" in doc):
        raise ConfigError("convert: give exactly one of 'entries' or 'values'")
    name = doc.get("name", name)
    if "values" in doc:
        return DenseTensor(np.asarray(doc["values"], dtype=np.float64), name=name)
    if "shape" not in doc:
        raise ConfigError("convert: sparse 'entries' need a 'shape'", key="shape")
    entries = np.asarray(doc["entries"], dtype=np.float64).reshape(-1, len(doc["shape"]) + 1)
    return SparseTensor(doc["shape"], entries[:, :-1].astype(np.int64), entries[:, -1], name=name)


def _convert_csv(text: str, shape, name: str):
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    if not rows:
        raise ConfigError("convert: CSV has no data rows")
    arr = np.asarray(rows, dtype=np.float64)
    order = arr.shape[1] - 1
    if shape is None:
        shape = tuple(int(m) + 1 for m in arr[:, :order].max(axis=0))
    return SparseTensor(shape, arr[:, :order].astype(np.int64), arr[:, order], name=name)


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def cmd_convert(args) -> dict:
    src = Path(args.input)
    fmt = args.format or src.suffix.lstrip(".").lower()
    text = src.read_text(encoding="utf-8")
    name = args.name or src.stem
    shape = tuple(int(s) for s in args.shape.split(",")) if args.shape else None
    if fmt == "json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{src}: invalid JSON ({exc})") from exc
        if shape is not None:
            doc = dict(doc, shape=list(shape))
        tensor = _convert_json(doc, name)
    elif fmt == "csv":
        tensor = _convert_csv(text, shape, name)
    else:
        raise ConfigError(f"convert: unknown input format {fmt!r} (expected json or csv)")
    if args.dense:
        if not isinstance(tensor, DenseTensor):
            if tensor.nnz != tensor.size:
                raise ConfigError("convert: --dense needs every entry present")
            tensor = DenseTensor(tensor.to_dense(), name=tensor.name)
    run = _Run(args, {"input": src.name, "format": fmt})
    write_tensor(tensor, args.out, run.provenance())
    return {"out": args.out, "kind": "dense" if isinstance(tensor, DenseTensor) else "sparse",
            "shape": list(tensor.shape)}


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--threads", type=int, default=None, help="parallel base models (default 1)")
    out_mode = common.add_mutually_exclusive_group()
    out_mode.add_argument("--quiet", action="store_true", help="only warnings and errors")
    out_mode.add_argument("--json", action="store_true", help="print the result summary as JSON")

    p = argparse.ArgumentParser(prog="tensorfill", description="Sparse tensor completion toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("generate", parents=[common], help="build a synthetic tensor from a generator spec")
    s.add_argument("spec")
    s.add_argument("out")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("sample", parents=[common], help="sample observed entries of a dense tensor")
    s.add_argument("tensor")
    s.add_argument("out")
    s.add_argument("--fraction", type=float, required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("complete", parents=[common], help="complete an observed tensor with one method")
    s.add_argument("observed")
    s.add_argument("out")
    s.add_argument("--config", help="method JSON (flags override it)")
    s.add_argument("--method")
    s.add_argument("--rank", type=int)
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--lr", type=float)
    s.add_argument("--max-epochs", dest="max_epochs", type=int)
    s.add_argument("--patience", type=int)
    s.add_argument("--truth", help="dense ground truth; adds held-out metrics to the summary")
    s.set_defaults(func=cmd_complete)

    s = sub.add_parser("ensemble", parents=[common], help="train and save a TenSemble ensemble")
    s.add_argument("observed")
    s.add_argument("out", help="output directory")
    s.add_argument("--spec", help="ensemble JSON")
    s.set_defaults(func=cmd_ensemble)

    for name, func, helptext in (
        ("benchmark", cmd_benchmark, "methods x tensors x fractions x repetitions"),
        ("sweep", cmd_sweep, "benchmark over the standard sparsity levels"),
        ("lambda", cmd_lambda, "smoothness-weight sensitivity"),
        ("rankscan", cmd_rankscan, "decompose-and-reconstruct error per rank"),
        ("crossdataset", cmd_crossdataset, "joint completion with a dataset mode"),
        ("timing", cmd_timing, "per-method runtime table"),
    ):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("spec")
        s.add_argument("out", help="output directory")
        s.set_defaults(func=func)

    s = sub.add_parser("convert", parents=[common], help="JSON/CSV to .sptn")
    s.add_argument("input")
    s.add_argument("out")
    s.add_argument("--format", choices=("json", "csv"))
    s.add_argument("--shape", help="comma-separated shape, e.g. 10,10,10")
    s.add_argument("--name")
    s.add_argument("--dense", action="store_true", help="write a dense tensor")
    s.set_defaults(func=cmd_convert)
    return p


def _fail(code: int, kind: str, exc: BaseException, key=None) -> int:
    err = {"error": kind, "message": str(exc)}
    if key is not None:
        err["key"] = key
    print(json.dumps(err, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if (args.quiet or args.json) else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.threads is not None and args.threads < 1:
        return _fail(EXIT_CONFIG, "config", ValueError("--threads must be >= 1"), "threads")
    try:
        summary = args.func(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc, exc.key)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return _fail(EXIT_IO, "io", exc)
    except TensorError as exc:
        return _fail(EXIT_CONFIG, "schema", exc)
    except OSError as exc:
        return _fail(EXIT_IO, "io", exc)
    except Exception as exc:  # noqa: BLE001 - surfaced as JSON, not a traceback
        log.debug("command failed", exc_info=True)
        return _fail(EXIT_OTHER, type(exc).__name__, exc)
    _Run(args, {}).emit(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
