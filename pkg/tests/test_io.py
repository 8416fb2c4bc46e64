import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from boolcd import io
from boolcd.reservoir import StateMatrix

finite = st.floats(0, 1e6, allow_nan=False, allow_infinity=False)


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=finite))
def test_csv_roundtrip_exact(tmp_path_factory, values):
    p = tmp_path_factory.mktemp("csv") / "s.csv"
    io.write_state_csv(p, values)
    assert io.read_state(p) == StateMatrix(values)


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=finite))
def test_binary_roundtrip_exact(tmp_path_factory, values):
    p = tmp_path_factory.mktemp("bin") / "s.bin"
    io.write_state_binary(p, values)
    assert io.read_state(p) == StateMatrix(values)


def test_binary_layout(tmp_path):
    p = tmp_path / "s.bin"
    io.write_state_binary(p, np.array([[1.0, 2.0, 3.0]]))
    data = p.read_bytes()
    assert data[:4] == b"BCD1"
    assert int.from_bytes(data[4:8], "little") == 1
    assert int.from_bytes(data[8:12], "little") == 3
    assert np.frombuffer(data[12:], "<f8").tolist() == [1.0, 2.0, 3.0]


def test_binary_rejects_truncation(tmp_path):
    p = tmp_path / "s.bin"
    io.write_state_binary(p, np.ones((2, 2)))
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(ValueError, match="expected"):
        io.read_state_binary(p)


def test_csv_without_header(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("1,2\n3,4\n")
    np.testing.assert_array_equal(io.read_state(p).values, [[1, 2], [3, 4]])


def test_csv_ragged(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("1,2\n3\n")
    with pytest.raises(ValueError, match="ragged"):
        io.read_state_csv(p)


def test_vector_roundtrip(tmp_path):
    p = tmp_path / "v.csv"
    v = np.array([0.1, -2.5, 1e-300, 0.0])
    io.write_vector_csv(p, v, "target")
    assert p.read_text().splitlines()[0] == "target"
    np.testing.assert_array_equal(io.read_vector_csv(p), v)


def test_json_is_sorted_and_handles_numpy(tmp_path):
    p = tmp_path / "x.json"
    io.dump_json(p, {"b": np.float64(np.inf), "a": np.arange(2), "c": np.nan, "d": np.bool_(True)})
    text = p.read_text()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [0, 1], "b": "inf", "c": None, "d": True}
