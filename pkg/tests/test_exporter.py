import csv
import json
import os

import numpy as np
import pytest

from meanfieldpy.core.errors import ConfigurationError
from meanfieldpy.core.exporter import Exporter
from meanfieldpy.core.spectral import random_band_limited


def test_grid_file_round_trip(tmp_path, skew_lattice):
    field = random_band_limited(8, 6, skew_lattice, seed=3)
    path = Exporter.export_grid(str(tmp_path / "u.grid"), field)
    loaded = Exporter.load_grid(path)
    assert loaded.shape == (8, 6)
    assert np.array_equal(loaded.values, field.values)
    assert loaded.lattice.basis_b == pytest.approx(skew_lattice.basis_b)


def test_grid_file_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.grid"
    bad.write_bytes(b"x" * 80)
    with pytest.raises(ConfigurationError, match="not a grid file"):
        Exporter.load_grid(str(bad))
    short = tmp_path / "short.grid"
    short.write_bytes(b"MFGRID1")
    with pytest.raises(ConfigurationError):
        Exporter.load_grid(str(short))


def test_truncated_grid_file(tmp_path):
    path = Exporter.export_grid(str(tmp_path / "u.grid"), random_band_limited(4, 4, seed=1))
    with open(path, "rb") as f:
        data = f.read()
    with open(path, "wb") as f:
        f.write(data[:-8])
    with pytest.raises(ConfigurationError, match="expected"):
        Exporter.load_grid(path)


def test_csv_keeps_full_precision(tmp_path):
    path = Exporter.export_csv(str(tmp_path / "t.csv"), ["eps", "value", "status"],
                               [(0.1, 1.0 / 3.0, "bounded"), (np.float64(0.2), 2, "failed")])
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["eps", "value", "status"]
    assert float(rows[1][1]) == 1.0 / 3.0
    assert rows[2] == ["0.2", "2", "failed"]


def test_json_is_sorted_and_atomic(tmp_path):
    path = Exporter.export_json(str(tmp_path / "nested" / "out.json"), {"b": 1, "a": [1.5, None]})
    with open(path) as f:
        text = f.read()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [1.5, None], "b": 1}
    assert [name for name in os.listdir(tmp_path / "nested")] == ["out.json"]


def test_grid_csv_has_cartesian_nodes(tmp_path, hex_lattice):
    field = random_band_limited(4, 4, hex_lattice, seed=0)
    path = Exporter.export_grid_csv(str(tmp_path / "u.csv"), field)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["x1", "x2", "value"]
    assert len(rows) == 17
    # node (0, 1) sits at b / 4
    assert float(rows[2][0]) == pytest.approx(0.125)
    assert float(rows[2][1]) == pytest.approx(np.sqrt(3.0) / 8.0)
