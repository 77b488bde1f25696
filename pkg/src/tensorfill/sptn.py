"""Reader and writer for the ``.sptn`` text tensor format.

Line 1 is a JSON header::

    {"order":3,"shape":[4,5,6],"count":12,"kind":"sparse","name":"x"}

followed by ``count`` lines of ``N`` zero-based integer indices and one
value. Values are written with :func:`repr`, which round-trips float64
exactly. Dense files list every entry in row-major order.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .tensor import (
    DenseTensor,
    IndexOutOfBoundsError,
    NonFiniteValueError,
    SparseTensor,
    TensorError,
    all_indices,
    check_shape,
)

__all__ = [
    "HeaderError",
    "FormatError",
    "format_value",
    "parse_value",
    "write_tensor",
    "read_tensor",
    "dumps_tensor",
    "loads_tensor",
    "atomic_write_text",
]

_HEADER_KEYS = ("order", "shape", "count", "kind", "name")


class HeaderError(TensorError):
    """Missing, malformed or inconsistent header line."""


class FormatError(TensorError):
    """Malformed entry line or entry count mismatch."""


def format_value(v: float) -> str:
    v = float(v)
    if not math.isfinite(v):
        raise NonFiniteValueError(f"cannot serialize non-finite value {v}")
    return repr(v)


def parse_value(text: str) -> float:
    try:
        v = float(text)
    except ValueError as exc:
        raise FormatError(f"bad value {text!r}") from exc
    if not math.isfinite(v):
        raise NonFiniteValueError(f"non-finite value {text!r}")
    return v


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_tensor(tensor, provenance: dict | None = None) -> str:
    if isinstance(tensor, DenseTensor):
        kind = "dense"
        idx = all_indices(tensor.shape)
        vals = tensor.flat()
    elif isinstance(tensor, SparseTensor):
        kind = "sparse"
        idx, vals = tensor.indices, tensor.values
    else:
        raise TypeError(f"cannot serialize {type(tensor).__name__}")
    header = {
        "order": len(tensor.shape),
        "shape": list(tensor.shape),
        "count": int(vals.shape[0]),
        "kind": kind,
        "name": tensor.name,
    }
    if provenance is not None:
        header["provenance"] = provenance
    lines = [json.dumps(header, separators=(",", ":"), sort_keys=False)]
    for row, v in zip(idx.tolist(), vals.tolist()):
        lines.append(" ".join(map(str, row)) + " " + format_value(v))
    return "\n".join(lines) + "\n"


def write_tensor(tensor, path, provenance: dict | None = None) -> None:
    atomic_write_text(path, dumps_tensor(tensor, provenance))


def _parse_header(line: str) -> dict:
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise HeaderError(f"header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise HeaderError("header must be a JSON object")
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise HeaderError(f"header missing keys {missing}")
    if header["kind"] not in ("sparse", "dense"):
        raise HeaderError(f"unknown kind {header['kind']!r}")
    try:
        shape = check_shape(header["shape"])
    except TensorError as exc:
        raise HeaderError(str(exc)) from exc
    if header["order"] != len(shape):
        raise HeaderError(f"order {header['order']} does not match shape {shape}")
    count = header["count"]
    if not isinstance(count, int) or count < 0:
        raise HeaderError(f"bad count {count!r}")
    if header["kind"] == "dense" and count != int(np.prod(shape)):
        raise HeaderError(f"dense tensor of shape {shape} needs {np.prod(shape)} entries, header says {count}")
    header["shape"] = shape
    return header


def loads_tensor(text: str):
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise HeaderError("empty file")
    header = _parse_header(lines[0])
    shape, n, count = header["shape"], header["order"], header["count"]
    body = lines[1:]
    if len(body) != count:
        raise FormatError(f"header count {count} but {len(body)} entry lines")
    idx = np.empty((count, n), dtype=np.int64)
    vals = np.empty(count, dtype=np.float64)
    dims = np.asarray(shape)
    for k, line in enumerate(body):
        parts = line.split(" ")
        if len(parts) != n + 1:
            raise FormatError(f"line {k + 2}: expected {n + 1} fields, got {len(parts)}")
        try:
            row = [int(p) for p in parts[:n]]
        except ValueError as exc:
            raise FormatError(f"line {k + 2}: bad index") from exc
        if any(i < 0 or i >= d for i, d in zip(row, dims)):
            raise IndexOutOfBoundsError(f"line {k + 2}: index {tuple(row)} out of bounds for shape {shape}")
        idx[k] = row
        vals[k] = parse_value(parts[n])
    sparse = SparseTensor(shape, idx, vals, name=header["name"])
    if header["kind"] == "sparse":
        return sparse
    # a dense file has every index exactly once; SparseTensor already rejected duplicates
    if sparse.nnz != sparse.size:
        raise FormatError(f"dense file has {sparse.nnz} of {sparse.size} entries")
    return DenseTensor(sparse.values.reshape(shape), name=header["name"],
                       meta={"provenance": header["provenance"]} if "provenance" in header else {})


def read_tensor(path):
    """Read a ``.sptn`` file as :class:`SparseTensor` or :class:`DenseTensor`."""
    with open(path, encoding="utf-8", newline="") as fh:
        return loads_tensor(fh.read())
