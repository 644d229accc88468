from __future__ import annotations

import json
import math

import numpy as np
import pytest

from src import artifacts
from src.artifacts import dumps_json, format_float, write_csv, write_json
from src.errors import ArtifactIOError


def test_json_is_sorted_and_finite(tmp_path) -> None:
    path = write_json(tmp_path / "out" / "a.json",
                      {"b": np.float64(0.1), "a": [np.int64(3), math.inf], "c": np.array([1.5, 2.0])})
    data = json.loads(path.read_text())
    assert data == {"a": [3, None], "b": 0.1, "c": [1.5, 2.0]}
    assert path.read_text().index('"a"') < path.read_text().index('"b"')
    assert not (tmp_path / "out" / "a.json.tmp").exists()


def test_same_payload_gives_identical_bytes() -> None:
    payload = {"x": 1.0 / 3.0, "labels": ["spectrum", "resolvent"]}
    assert dumps_json(payload) == dumps_json(dict(reversed(list(payload.items()))))


def test_csv_round_trip_floats(tmp_path) -> None:
    value = 2.0 / 3.0
    path = write_csv(tmp_path / "t.csv", ("E", "label", "lambda"), [(value, "spectrum", None)])
    lines = path.read_text().splitlines()
    assert lines[0] == "E,label,lambda"
    assert float(lines[1].split(",")[0]) == value
    assert lines[1].endswith(",")


def test_format_float() -> None:
    assert format_float(None) == ""
    assert format_float(True) == "true"
    assert format_float(np.int64(7)) == "7"
    assert format_float(0.1) == "0.1"


def test_write_failure_is_artifact_error(tmp_path, monkeypatch) -> None:
    def broken(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(artifacts.os, "replace", broken)
    with pytest.raises(ArtifactIOError, match="disk full"):
        write_json(tmp_path / "x.json", {})
    assert not (tmp_path / "x.json.tmp").exists()
