"""Query (distinct-)cardinality tensors over an in-memory column table.

Each mode is one predicate ``column <op> value`` swept over an ordered
value list; connectors join the predicates left to right, so
``("AND", "OR")`` means ``(p1 AND p2) OR p3``. A cell holds the number of
matching rows, or the number of distinct values of ``distinct`` among
them.
"""
from __future__ import annotations

import operator
from dataclasses import dataclass

import numpy as np

from ..tensor import DenseTensor

__all__ = [
    "QueryTypeError",
    "Table",
    "Predicate",
    "QueryTemplate",
    "make_table",
    "random_template",
    "query_counts",
    "generate_query_tensor",
]

_NUMERIC_OPS = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge}
_EQ_OPS = {"==": operator.eq, "!=": operator.ne}


class QueryTypeError(TypeError):
    """Predicate operator or value does not fit the column type."""


class Table:
    """Named, equal-length numpy columns."""

    def __init__(self, columns: dict):
        cols = {k: np.asarray(v) for k, v in columns.items()}
        lengths = {len(v) for v in cols.values()}
        if len(lengths) != 1:
            raise ValueError("all columns must have the same length")
        self.columns = cols
        self.n_rows = lengths.pop()
        if self.n_rows == 0:
            raise ValueError("table is empty")

    def __getitem__(self, name):
        if name not in self.columns:
            raise KeyError(f"no column {name!r}")
        return self.columns[name]

    def is_string(self, name) -> bool:
        return self[name].dtype.kind in "US"


def make_table(n_rows: int = 200, seed: int = 0) -> Table:
    """Synthetic person table.

    ``person_id`` repeats (so distinct counts differ from row counts),
    ``surname_pcode`` is a letter-prefixed code, plus an integer
    ``birth_year`` and a float ``score``.
    """
    rng = np.random.default_rng(seed)
    letters = np.array(list("ABCDEFGH"))
    pcode = np.char.add(rng.choice(letters, n_rows), rng.integers(100, 1000, n_rows).astype(str))
    return Table({
        "person_id": rng.integers(0, max(2, n_rows // 2), n_rows),
        "surname_pcode": pcode,
        "birth_year": rng.integers(1940, 2011, n_rows),
        "score": np.round(rng.uniform(0.0, 100.0, n_rows), 2),
    })


@dataclass(frozen=True)
class Predicate:
    column: str
    op: str
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if self.op not in _NUMERIC_OPS and self.op not in _EQ_OPS and self.op != "prefix":
            raise ValueError(f"unknown operator {self.op!r}")
        if len(self.values) < 1:
            raise ValueError("a predicate needs at least one value")

    def check(self, table: Table):
        is_str = table.is_string(self.column)
        if self.op == "prefix" and not is_str:
            raise QueryTypeError(f"prefix match on non-string column {self.column!r}")
        if self.op in _NUMERIC_OPS and is_str:
            raise QueryTypeError(f"range operator {self.op!r} on string column {self.column!r}")
        for v in self.values:
            if isinstance(v, str) != is_str:
                raise QueryTypeError(f"value {v!r} does not match type of column {self.column!r}")

    def masks(self, table: Table) -> np.ndarray:
        """``(len(values), n_rows)`` boolean matrix."""
        self.check(table)
        col = table[self.column]
        if self.op == "prefix":
            return np.stack([np.char.startswith(col, v) for v in self.values])
        fn = _NUMERIC_OPS.get(self.op) or _EQ_OPS[self.op]
        return np.stack([fn(col, v) for v in self.values])


@dataclass(frozen=True)
class QueryTemplate:
    table: Table
    predicates: tuple
    connectors: tuple
    distinct: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "predicates", tuple(self.predicates))
        conn = self.connectors
        if isinstance(conn, str):
            conn = tuple(conn.split("_")) if conn else ()
        conn = tuple(c.upper() for c in conn)
        object.__setattr__(self, "connectors", conn)
        if len(conn) != len(self.predicates) - 1:
            raise ValueError(f"{len(self.predicates)} predicates need {len(self.predicates) - 1} connectors")
        if any(c not in ("AND", "OR") for c in conn):
            raise ValueError(f"connectors must be AND or OR, got {conn}")
        if self.distinct is not None:
            self.table[self.distinct]

    @property
    def shape(self) -> tuple:
        return tuple(len(p.values) for p in self.predicates)

    def expression(self) -> str:
        """Fully parenthesized boolean expression, e.g. ``((p1 AND p2) OR p3)``."""
        expr = "p1"
        for n, c in enumerate(self.connectors, start=2):
            expr = f"({expr} {c} p{n})"
        return expr


def random_template(table: Table, n_values: int = 5, seed: int = 0, distinct: str | None = "person_id") -> QueryTemplate:
    """Three-predicate template with random operators, thresholds and connectors."""
    rng = np.random.default_rng(seed)
    preds = []
    for col in ("birth_year", "score"):
        op = str(rng.choice(["<", "<=", ">", ">="]))
        lo, hi = np.quantile(table[col], [0.1, 0.9])
        preds.append(Predicate(col, op, tuple(np.linspace(lo, hi, n_values).round(2).tolist())))
    letters = sorted({s[0] for s in table["surname_pcode"]})
    prefixes = tuple(rng.choice(letters, size=n_values, replace=len(letters) < n_values).tolist())
    preds.append(Predicate("surname_pcode", "prefix", prefixes))
    order = rng.permutation(3)
    connectors = tuple(rng.choice(["AND", "OR"], size=2).tolist())
    return QueryTemplate(table, tuple(preds[i] for i in order), connectors, distinct)


def _match_matrix(template: QueryTemplate) -> np.ndarray:
    masks = [p.masks(template.table) for p in template.predicates]
    acc = masks[0]
    for conn, m in zip(template.connectors, masks[1:]):
        a = acc[..., None, :]
        b = m.reshape((1,) * (acc.ndim - 1) + m.shape)
        acc = (a & b) if conn == "AND" else (a | b)
    return acc


def query_counts(template: QueryTemplate, distinct: bool = False) -> np.ndarray:
    """Raw integer cardinalities (or distinct counts) for every cell."""
    match = _match_matrix(template)
    if not distinct:
        return match.sum(axis=-1).astype(np.int64)
    if template.distinct is None:
        raise ValueError("template has no distinct attribute")
    _, codes = np.unique(template.table[template.distinct], return_inverse=True)
    flat = match.reshape(-1, template.table.n_rows)
    out = np.array([np.unique(codes[row]).size for row in flat], dtype=np.int64)
    return out.reshape(template.shape)


def generate_query_tensor(template: QueryTemplate, name: str = "") -> DenseTensor:
    """Min-max scaled cardinality tensor; distinct counts when the template
    names a ``distinct`` column. Raw counts are ``min + x * (max - min)``."""
    distinct = template.distinct is not None
    raw = query_counts(template, distinct)
    lo, hi = int(raw.min()), int(raw.max())
    scaled = (raw - lo) / (hi - lo) if hi > lo else np.zeros(raw.shape)
    meta = {
        "generator": "query",
        "kind": "distinct" if distinct else "cardinality",
        "expression": template.expression(),
        "predicates": [{"column": p.column, "op": p.op, "values": list(p.values)} for p in template.predicates],
        "connectors": list(template.connectors),
        "distinct": template.distinct,
        "min": lo,
        "max": hi,
        "n_rows": template.table.n_rows,
    }
    return DenseTensor(scaled, name=name or ("qdc" if distinct else "qc"), meta=meta)
