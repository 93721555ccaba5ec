"""CSV parsing, number formatting, and snapshot round-trips."""

import json
import math

import numpy as np
import pytest

from conformalkit import InputError
from conformalkit.io import (
    SNAPSHOT_FORMAT,
    column_floats,
    column_ints,
    feature_matrix,
    fmt_number,
    load_snapshot,
    pi_matrix,
    read_columns,
    save_snapshot,
    write_rows,
)


def test_read_columns_roundtrip(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("x1,y\n1.5,2\n-3,4.25\n\n0,1\n")
    cols, count = read_columns(path)
    assert count == 3
    assert cols["x1"] == ["1.5", "-3", "0"]
    assert column_floats(cols, "y", "data").tolist() == [2.0, 4.25, 1.0]


def test_read_columns_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(InputError, match="empty"):
        read_columns(empty)
    dup = tmp_path / "dup.csv"
    dup.write_text("y,y\n1,2\n")
    with pytest.raises(InputError, match="duplicate"):
        read_columns(dup)
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("x1,y\n1,2\n3\n")
    with pytest.raises(InputError, match="expected 2 fields"):
        read_columns(ragged)
    with pytest.raises(InputError, match="cannot read"):
        read_columns(tmp_path / "missing.csv")


def test_column_parsers():
    cols = {"y": ["1.5", "oops"], "k": ["3", "x"], "z": ["nan"]}
    with pytest.raises(InputError, match="bad number"):
        column_floats(cols, "y", "t")
    with pytest.raises(InputError, match="bad integer"):
        column_ints(cols, "k", "t")
    with pytest.raises(InputError, match="missing required column"):
        column_floats(cols, "absent", "t")
    with pytest.raises(InputError, match="NaN"):
        column_floats(cols, "z", "t")
    assert column_floats(cols, "z", "t", allow_nan=True).size == 1


def test_feature_and_pi_matrices():
    cols = {"x1": ["1", "2"], "x2": ["3", "4"], "y": ["0", "0"]}
    mat = feature_matrix(cols, "t")
    assert mat.tolist() == [[1.0, 3.0], [2.0, 4.0]]
    assert feature_matrix({"y": ["1"]}, "t") is None
    gap = {"x1": ["1"], "x3": ["2"]}
    with pytest.raises(InputError, match="consecutive"):
        feature_matrix(gap, "t")
    probs = {"pi_1": ["0.7"], "pi_2": ["0.3"]}
    assert pi_matrix(probs, "t").tolist() == [[0.7, 0.3]]
    assert pi_matrix({"y": ["1"]}, "t") is None


def test_fmt_number_exact_roundtrip():
    values = [0.1, 1 / 3, -2.5e-17, 1e300, 123456789.123456789]
    for v in values:
        assert float(fmt_number(v)) == v
    assert fmt_number(np.float64(0.25)) == "0.25"
    assert fmt_number(7) == "7"
    assert fmt_number(math.inf) == "inf"
    assert fmt_number(-math.inf) == "-inf"
    assert fmt_number(math.nan) == "nan"


def test_write_rows_csv_and_json(tmp_path):
    rows = [[1, 2.5, "a"], [3, math.inf, "b"]]
    text = write_rows(None, ["i", "v", "tag"], rows, fmt="csv")
    assert text.splitlines() == ["i,v,tag", "1,2.5,a", "3,inf,b"]
    jtext = write_rows(None, ["i", "v", "tag"], rows, fmt="json")
    records = json.loads(jtext)
    assert records[0] == {"i": 1, "v": 2.5, "tag": "a"}
    assert records[1]["v"] == "inf"
    out = tmp_path / "rows.csv"
    write_rows(out, ["i"], [[1]], fmt="csv")
    assert out.read_text() == "i\n1\n"
    with pytest.raises(InputError, match="unknown output format"):
        write_rows(None, ["i"], [[1]], fmt="yaml")


def test_snapshot_roundtrip(tmp_path):
    payload = {
        "method": "one_sided",
        "alpha": 0.1,
        "n": 3,
        "scores": [1.0, 2.0, 3.0],
        "threshold": math.inf,
    }
    path = tmp_path / "snap.json"
    save_snapshot(payload, path)
    data = load_snapshot(path)
    assert data["format"] == SNAPSHOT_FORMAT
    assert data["method"] == "one_sided"
    assert data["threshold"] == math.inf
    assert data["scores"] == [1.0, 2.0, 3.0]


def test_snapshot_rejects_foreign_files(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InputError, match="invalid JSON"):
        load_snapshot(bad)
    other = tmp_path / "other.json"
    other.write_text(json.dumps({"format": "something-else"}))
    with pytest.raises(InputError, match="not a"):
        load_snapshot(other)
    listy = tmp_path / "list.json"
    listy.write_text("[1, 2]")
    with pytest.raises(InputError, match="not a"):
        load_snapshot(listy)
    with pytest.raises(InputError, match="cannot read"):
        load_snapshot(tmp_path / "absent.json")
