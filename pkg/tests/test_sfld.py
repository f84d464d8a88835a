import json

import numpy as np
import pytest

from maxlow import GridDomain, Kind, ShapeError, StaggeredField, read_sfld, write_sfld
from maxlow.sources import random_bump_field


def test_round_trip(tmp_path):
    g = GridDomain.build((6, 5, 4), 0.5, label=2)
    F = random_bump_field(g, Kind.EDGE, 42, radius=1.0)
    path = tmp_path / "field.sfld"
    write_sfld(str(path), F)
    back = read_sfld(str(path))
    assert back.kind == Kind.EDGE
    assert back.grid.cell_counts == g.cell_counts
    assert np.array_equal(back.values, F.values)


def test_header_is_json_line(tmp_path):
    g = GridDomain.build((3, 3, 3), 1.0, label=2)
    F = StaggeredField.zeros(g, Kind.CELL)
    path = tmp_path / "x.sfld"
    write_sfld(str(path), F)
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
    assert header["maxlow_sfld"] == 1
    assert header["kind"] == "CELL"
    assert header["endianness"] == "little"
    assert header["count"] == 27


def test_truncated_payload_rejected(tmp_path):
    g = GridDomain.build((3, 3, 3), 1.0, label=2)
    F = StaggeredField.zeros(g, Kind.NODE)
    path = tmp_path / "y.sfld"
    write_sfld(str(path), F)
    data = path.read_bytes()
    path.write_bytes(data[:-16])
    with pytest.raises(ShapeError):
        read_sfld(str(path))


def test_grid_mismatch_rejected(tmp_path):
    g = GridDomain.build((3, 3, 3), 1.0, label=2)
    other = GridDomain.build((4, 4, 4), 1.0, label=2)
    path = tmp_path / "z.sfld"
    write_sfld(str(path), StaggeredField.zeros(g, Kind.FACE))
    with pytest.raises(ShapeError):
        read_sfld(str(path), grid=other)


def test_supplied_grid_is_shared(tmp_path):
    g = GridDomain.build((4, 4, 4), 0.25, label=2)
    path = tmp_path / "w.sfld"
    write_sfld(str(path), StaggeredField.zeros(g, Kind.EDGE))
    back = read_sfld(str(path), grid=g)
    assert back.grid is g
