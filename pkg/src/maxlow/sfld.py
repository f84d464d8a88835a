"""Field container file format ``.sfld``.

A two-part file: one UTF-8 JSON header line (terminated by ``\\n``) holding
grid shape, spacing, origin, kind and endianness, followed by the raw
little-endian float64 (re, im) pairs in flat DOF order (see the layout table
in :mod:`maxlow.grid`).
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .errors import ShapeError
from .grid import GridDomain, Kind, StaggeredField

FORMAT_VERSION = 1


def write_sfld(path: str, f: StaggeredField) -> None:
    header = {
        "maxlow_sfld": FORMAT_VERSION,
        "kind": f.kind.value,
        "cell_counts": list(f.grid.cell_counts),
        "spacing": f.grid.spacing,
        "origin": list(f.grid.origin),
        "endianness": "little",
        "count": int(f.values.size),
    }
    payload = np.empty(2 * f.values.size, dtype="<f8")
    payload[0::2] = f.values.real
    payload[1::2] = f.values.imag
    tmp = tempfile.NamedTemporaryFile(
        dir=os.path.dirname(os.path.abspath(path)) or ".", delete=False
    )
    try:
        with tmp:
            tmp.write(json.dumps(header).encode("utf-8"))
            tmp.write(b"\n")
            tmp.write(payload.tobytes())
        os.replace(tmp.name, path)
    except BaseException:
        os.unlink(tmp.name)
        raise


def read_sfld(path: str, grid: GridDomain | None = None) -> StaggeredField:
    """Read a field; a compatible ``grid`` may be supplied to share masks."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if header.get("maxlow_sfld") != FORMAT_VERSION:
        raise ShapeError(f"unsupported .sfld version in {path}")
    kind = Kind(header["kind"])
    counts = tuple(header["cell_counts"])
    if grid is None:
        grid = GridDomain.build(counts, header["spacing"],
                                origin=tuple(header["origin"]), strict=False)
    if grid.cell_counts != counts or grid.spacing != header["spacing"]:
        raise ShapeError("grid does not match .sfld header")
    if raw.size != 2 * header["count"]:
        raise ShapeError("payload size does not match header count")
    vals = raw[0::2] + 1j * raw[1::2]
    return StaggeredField(grid, kind, vals)
