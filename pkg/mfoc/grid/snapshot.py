"""
Field snapshot files.

Binary (little-endian): header = magic "MFOC", version u32, d u32, n u32, count u64,
then count float64 values in row-major node order. count may be a multiple of n^d,
in which case the file holds a stack of frames (e.g. a whole trajectory).
The version is get_format_schema_int(SNAPSHOT_SCHEMA_VERSION).

CSV: one row per node, columns i0..i{d-1} (node indices) and value.
"""
import csv
import os
import struct
from typing import Tuple

import numpy as np

from mfoc import get_format_schema_int
from mfoc.exceptions import SnapshotFormatError
from mfoc.grid.torus import ScalarField, TorusGrid

SNAPSHOT_MAGIC = b"MFOC"
SNAPSHOT_SCHEMA_VERSION = "0.1.0"
# the header stores major/minor only, patch releases read each other's files
SNAPSHOT_FORMAT_VERSION = get_format_schema_int(SNAPSHOT_SCHEMA_VERSION)
_HEADER = struct.Struct("<4sIIIQ")


def _is_csv(filename: str) -> bool:
    return filename.lower().endswith(".csv")


def write_snapshot(filename: str, grid: TorusGrid, values: np.ndarray):
    """ values is one field (shape grid.shape) or a stack of frames (shape (frames,) + grid.shape) """
    values = np.asarray(values, dtype=float)
    if values.shape[-grid.d:] != grid.shape:
        raise SnapshotFormatError(f"Values of shape {values.shape} do not end with grid shape {grid.shape}")
    if _is_csv(filename):
        if values.shape != grid.shape:
            raise SnapshotFormatError("CSV snapshots hold exactly one frame")
        _write_csv(filename, grid, values)
        return

    with open(filename, "wb") as f:
        f.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_FORMAT_VERSION, grid.d, grid.n, values.size))
        f.write(values.astype("<f8").tobytes(order="C"))


def _write_csv(filename: str, grid: TorusGrid, values: np.ndarray):
    index_columns = [f"i{axis}" for axis in range(grid.d)]
    with open(filename, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(index_columns + ["value"])
        for index in np.ndindex(*grid.shape):
            writer.writerow(list(index) + [repr(float(values[index]))])


def read_snapshot(filename: str) -> Tuple[TorusGrid, np.ndarray]:
    """ Returns (grid, frames) where frames has shape (num_frames,) + grid.shape """
    if _is_csv(filename):
        grid, values = _read_csv(filename)
        return grid, values[np.newaxis]

    with open(filename, "rb") as f:
        header = f.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise SnapshotFormatError(f"{filename}: truncated header")
        magic, version, d, n, count = _HEADER.unpack(header)
        if magic != SNAPSHOT_MAGIC:
            raise SnapshotFormatError(f"{filename}: bad magic {magic!r}, expected {SNAPSHOT_MAGIC!r}")
        check_snapshot_schema(filename, version)
        grid = TorusGrid(d, n)
        nodes = n ** d
        if count == 0 or count % nodes:
            raise SnapshotFormatError(f"{filename}: value count {count} is not a multiple of {nodes} nodes")
        values = np.frombuffer(f.read(), dtype="<f8")
    if values.size != count:
        raise SnapshotFormatError(f"{filename}: header says {count} values, file holds {values.size}")
    return grid, values.astype(float).reshape((count // nodes,) + grid.shape)


def _read_csv(filename: str) -> Tuple[TorusGrid, np.ndarray]:
    with open(filename) as f:
        reader = csv.DictReader(f)
        index_columns = [c for c in reader.fieldnames if c.startswith("i")]
        if "value" not in reader.fieldnames or not index_columns:
            raise SnapshotFormatError(f"{filename}: expected columns i0..i(d-1) and value, got {reader.fieldnames}")
        rows = [(tuple(int(row[c]) for c in index_columns), float(row["value"])) for row in reader]

    d = len(index_columns)
    n = 1 + max(max(index) for index, _ in rows)
    grid = TorusGrid(d, n)
    if len(rows) != n ** d:
        raise SnapshotFormatError(f"{filename}: {len(rows)} rows for a {n}^{d} grid")
    values = np.empty(grid.shape)
    for index, value in rows:
        values[index] = value
    return grid, values


def read_field(filename: str, grid: TorusGrid = None) -> ScalarField:
    """ Single-frame snapshot as a ScalarField, optionally checked against an expected grid """
    file_grid, frames = read_snapshot(filename)
    if frames.shape[0] != 1:
        raise SnapshotFormatError(f"{filename}: holds {frames.shape[0]} frames, expected a single field")
    if grid is not None and file_grid != grid:
        raise SnapshotFormatError(f"{filename}: stored on {file_grid}, expected {grid}")
    return ScalarField(file_grid, frames[0])


def write_field(filename: str, field: ScalarField):
    write_snapshot(filename, field.grid, field.values)


def check_snapshot_schema(filename: str, version: int):
    """ Stored schema ints must agree on major.minor with this library """
    if version != SNAPSHOT_FORMAT_VERSION:
        major, minor = divmod(version, 1000)
        raise SnapshotFormatError(f"{filename}: snapshot schema {major}.{minor} is incompatible with "
                                  f"{SNAPSHOT_SCHEMA_VERSION}")


def snapshot_filename(directory: str, name: str, k: int) -> str:
    return os.path.join(directory, f"{name}_{k:06d}.mfoc")
