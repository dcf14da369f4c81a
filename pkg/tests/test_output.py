import json
import math

import numpy as np
import pytest

from zkcollide.config import resolve_config
from zkcollide.output import read_csv, write_csv, write_json


@pytest.fixture()
def cfg():
    return resolve_config(overrides={"mu0": 0.12})


def test_csv_round_trip(tmp_path, cfg) -> None:
    rows = [(0.0, 1.0 / 3.0, np.float64(2.5)), (1.0, -1e-300, 7)]
    path = write_csv(tmp_path / "nested" / "table.csv", ("t", "a", "b"), rows, cfg)
    text = path.read_text().splitlines()
    assert text[0] == f"# {cfg.provenance()[0]}"
    assert f"# config sha256 {cfg.config_hash}" in text
    header, values = read_csv(path)
    assert header == ["t", "a", "b"]
    assert values == [[0.0, 1.0 / 3.0, 2.5], [1.0, -1e-300, 7.0]]


def test_csv_rejects_ragged_rows(tmp_path, cfg) -> None:
    with pytest.raises(ValueError, match="row of length 2"):
        write_csv(tmp_path / "bad.csv", ("t", "a", "b"), [(0.0, 1.0)], cfg)


def test_json_provenance_and_conversions(tmp_path, cfg) -> None:
    payload = {
        "ratio": np.float64(0.5),
        "missing": math.nan,
        "count": np.int64(3),
        "ok": np.bool_(True),
        "series": np.array([1.0, 2.0]),
        "pair": (1, 2.0),
        "where": tmp_path,
    }
    path = write_json(tmp_path / "report.json", payload, cfg)
    document = json.loads(path.read_text())
    assert document["provenance"]["config_hash"] == cfg.config_hash
    assert "mu0 = 0.12" in document["provenance"]["lines"]
    assert document["ratio"] == 0.5
    assert document["missing"] == "nan"
    assert document["count"] == 3
    assert document["ok"] is True
    assert document["series"] == [1.0, 2.0]
    assert document["pair"] == [1, 2.0]
    assert document["where"] == str(tmp_path)
