import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensorfill.sptn import (
    FormatError,
    HeaderError,
    dumps_tensor,
    loads_tensor,
    read_tensor,
    write_tensor,
)
from tensorfill.tensor import DenseTensor, DuplicateIndexError, IndexOutOfBoundsError, NonFiniteValueError, SparseTensor

finite = st.floats(allow_nan=False, allow_infinity=False)


def test_dense_round_trip(tmp_path):
    t = DenseTensor(np.array([[1.0, 2.0], [3.0, 4.0]]), name="small")
    write_tensor(t, tmp_path / "t.sptn")
    back = read_tensor(tmp_path / "t.sptn")
    assert isinstance(back, DenseTensor)
    assert np.array_equal(back.values, t.values) and back.name == "small"


def test_sparse_round_trip(tmp_path):
    s = SparseTensor((3, 4, 2), [[2, 3, 1], [0, 0, 0]], [0.1, -1e-300])
    write_tensor(s, tmp_path / "s.sptn")
    assert read_tensor(tmp_path / "s.sptn") == s


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=1, max_size=24))
def test_values_exact(values):
    t = DenseTensor(np.asarray(values).reshape(-1, 1))
    assert np.array_equal(loads_tensor(dumps_tensor(t)).values, t.values)


def test_header_layout():
    text = dumps_tensor(SparseTensor((3, 3), [[1, 2]], [0.5], name="x"), provenance={"seed": 4})
    header, line = text.splitlines()
    doc = json.loads(header)
    assert doc == {"order": 2, "shape": [3, 3], "count": 1, "kind": "sparse", "name": "x", "provenance": {"seed": 4}}
    assert line == "1 2 0.5"


def test_provenance_kept_on_dense_read():
    t = DenseTensor(np.ones((2,)))
    back = loads_tensor(dumps_tensor(t, provenance={"seed": 1}))
    assert back.meta["provenance"] == {"seed": 1}


def _file(lines, shape=(3,), kind="sparse"):
    header = {"order": len(shape), "shape": list(shape), "count": len(lines), "kind": kind, "name": ""}
    return "\n".join([json.dumps(header)] + lines) + "\n"


@pytest.mark.parametrize(
    "text, error",
    [
        (_file(["5 1.0"]), IndexOutOfBoundsError),
        (_file(["1 1.0", "1 2.0"]), DuplicateIndexError),
        (_file(["1 nan"]), NonFiniteValueError),
        (_file(["1 abc"]), FormatError),
        (_file(["1 2 3.0"]), FormatError),
        (_file(["0 1.0"], shape=(2,), kind="dense"), HeaderError),
        ("", HeaderError),
        ("not json\n", HeaderError),
    ],
)
def test_rejects_malformed(text, error):
    with pytest.raises(error):
        loads_tensor(text)


def test_count_mismatch():
    text = _file(["0 1.0"]).replace('"count": 1', '"count": 2')
    with pytest.raises(FormatError):
        loads_tensor(text)


def test_atomic_write_leaves_no_temp(tmp_path):
    write_tensor(DenseTensor(np.zeros(3)), tmp_path / "a.sptn")
    assert [p.name for p in tmp_path.iterdir()] == ["a.sptn"]


def test_failed_write_keeps_old_file(tmp_path):
    path = tmp_path / "a.sptn"
    write_tensor(DenseTensor(np.zeros(2)), path)
    before = path.read_text()
    with pytest.raises(TypeError):
        write_tensor(object(), path)
    assert path.read_text() == before
