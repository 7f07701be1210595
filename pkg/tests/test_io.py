import csv
import io

import numpy as np
import pytest

from predinfo.core import BINARY, SequenceDataset
from predinfo.io import (format_float, read_pisq, read_sequence_csv, read_table, write_pisq, write_sequence_csv,
                         write_table)


def test_format_float_round_trips():
    for x in (0.1, 1 / 3, 1e-300, -2.5e17, 0.0):
        assert float(format_float(x)) == x
    assert format_float(float("nan")) == "nan"
    assert format_float(float("-inf")) == "-inf"


def test_table_is_rfc4180_with_crlf(tmp_path):
    path = tmp_path / "t.csv"
    write_table(path, ["a", "b"], [[1, 'say "hi", ok'], [2, 0.5]], {"tool": "predinfo", "seed": 3})
    raw = path.read_bytes()
    assert b"\r\n" in raw and b"\n" not in raw.replace(b"\r\n", b"")
    rows = list(csv.reader(io.StringIO(raw.decode(), newline="")))
    assert rows[1] == ["a", "b"]
    assert rows[2] == ["1", 'say "hi", ok']
    meta, header, body = read_table(path)
    assert meta == {"tool": "predinfo", "seed": "3"}
    assert header == ["a", "b"] and body[1] == ["2", "0.5"]


def test_sequence_csv_round_trip(tmp_path, rng):
    ds = SequenceDataset(rng.standard_normal((40, 3)), generator_tag="gp:AR", seed=9)
    path = tmp_path / "s.csv"
    write_sequence_csv(path, ds, {"seed": 9, "generator": "gp:AR"})
    back = read_sequence_csv(path)
    np.testing.assert_array_equal(back.values, ds.values)
    assert back.seed == 9 and back.generator_tag == "gp:AR"
    assert read_table(path)[1] == ["t", "x0", "x1", "x2"]


def test_binary_alphabet_is_detected(tmp_path):
    ds = SequenceDataset(np.array([1.0, -1.0, -1.0, 1.0]), BINARY)
    write_sequence_csv(tmp_path / "b.csv", ds)
    assert read_sequence_csv(tmp_path / "b.csv").alphabet == BINARY


def test_pisq_round_trip_and_layout(tmp_path, rng):
    v = rng.standard_normal((7, 2))
    path = tmp_path / "x.pisq"
    write_pisq(path, v)
    blob = path.read_bytes()
    assert blob[:4] == b"PISQ"
    assert int.from_bytes(blob[4:8], "little") == 1
    assert int.from_bytes(blob[8:16], "little") == 7 and int.from_bytes(blob[16:24], "little") == 2
    assert np.frombuffer(blob[24:32], "<f8")[0] == v[0, 0]
    assert np.frombuffer(blob[32:40], "<f8")[0] == v[0, 1]
    np.testing.assert_array_equal(read_pisq(path), v)


def test_pisq_rejects_corruption(tmp_path):
    path = tmp_path / "x.pisq"
    write_pisq(path, np.ones((3, 1)))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError, match="truncated"):
        read_pisq(path)
    path.write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(ValueError, match="magic"):
        read_pisq(path)
