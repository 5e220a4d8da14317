"""Flat structured-text records for grids and belief summaries.

One record per line: ``field <rows> <cols> v1 v2 ...`` with row-major repr
floats (masks as 0/1), preceded by a type/version header line. The format is
self-describing, diff-friendly, and byte-stable for replay checks.
"""

from __future__ import annotations

from typing import TextIO

import numpy as np

from .geology import GeoModel


def _write_grid(fh: TextIO, name: str, grid: np.ndarray) -> None:
    rows, cols = grid.shape
    if grid.dtype == bool:
        values = " ".join("1" if v else "0" for v in grid.ravel())
    else:
        values = " ".join(repr(float(v)) for v in grid.ravel())
    fh.write(f"{name} {rows} {cols} {values}\n")


def _read_grid(line: str, dtype=float) -> tuple[str, np.ndarray]:
    parts = line.split()
    name, rows, cols = parts[0], int(parts[1]), int(parts[2])
    flat = np.array([float(v) for v in parts[3:]], dtype=float)
    grid = flat.reshape(rows, cols)
    if dtype is bool:
        grid = grid.astype(bool)
    return name, grid


def write_geomodel(m: GeoModel, fh: TextIO) -> None:
    fh.write("geomodel v1\n")
    fh.write(f"hypothesis_id {m.hypothesis_id}\n")
    _write_grid(fh, "thickness", m.thickness)
    _write_grid(fh, "grade", m.grade)
    _write_grid(fh, "graben_mask", m.graben_mask)
    _write_grid(fh, "geochem_mask", m.geochem_mask)


def read_geomodel(fh: TextIO) -> GeoModel:
    header = fh.readline().strip()
    if header != "geomodel v1":
        raise ValueError(f"not a geomodel record: {header!r}")
    hid = int(fh.readline().split()[1])
    grids = {}
    for _ in range(4):
        name, grid = _read_grid(fh.readline())
        grids[name] = grid
    return GeoModel(
        thickness=grids["thickness"],
        grade=grids["grade"],
        graben_mask=grids["graben_mask"].astype(bool),
        geochem_mask=grids["geochem_mask"].astype(bool),
        hypothesis_id=hid,
    )
