"""Output files: functional CSV tables, JSON summaries and binary snapshots.

Snapshot layout (all integers little-endian)::

    magic      8 bytes   b"EDSNAP01"
    dim        uint32
    N          uint32
    count      uint32    number of scalar arrays
    names      count x (uint16 length, utf-8 bytes)
    data       count x N**dim float64, row-major, in name order

Vector fields are stored one component per array (``v0``, ``v1``, ...).
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from electrodiff.diagnostics import METRICS
from electrodiff.fields import LimitState, NpnsState

MAGIC = b"EDSNAP01"
CSV_COLUMNS = ("t",) + METRICS


def _fmt(x: float) -> str:
    return repr(float(x))


def write_rows_csv(path, rows) -> Path:
    """Write functional rows; an empty ``rows`` gives a header-only file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.t)] + [_fmt(m) for m in r.metrics()])
    return path


def read_rows_csv(path):
    """Rows as dicts of floats keyed by column name."""
    with Path(path).open(newline="") as fh:
        return [{k: float(v) for k, v in rec.items()} for rec in csv.DictReader(fh)]


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def state_arrays(state) -> dict:
    """Named physical arrays of a state, vector fields split by component."""
    if isinstance(state, NpnsState):
        out = {"n": state.n.values, "p": state.p.values}
    elif isinstance(state, LimitState):
        out = {"Z": state.Z.values}
    else:
        raise TypeError(f"unsupported state type {type(state).__name__}")
    for i, comp in enumerate(state.v.values):
        out[f"v{i}"] = comp
    return out


def write_snapshot(path, arrays: dict) -> Path:
    """Write equally shaped ``(N,)*dim`` float arrays in the snapshot format."""
    if not arrays:
        raise ValueError("no arrays to write")
    shapes = {np.shape(a) for a in arrays.values()}
    if len(shapes) != 1:
        raise ValueError(f"arrays differ in shape: {sorted(shapes)}")
    shape = shapes.pop()
    dim, n = len(shape), shape[0]
    if dim not in (2, 3) or any(s != n for s in shape):
        raise ValueError(f"expected a cubic 2D or 3D array, got shape {shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", dim, n, len(arrays)))
        for name in arrays:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        for a in arrays.values():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes(order="C"))
    return path


def read_snapshot(path) -> dict:
    """Inverse of :func:`write_snapshot`; returns ``name -> ndarray``."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a snapshot file")
    dim, n, count = struct.unpack_from("<III", data, 8)
    off = 20
    names = []
    for _ in range(count):
        (length,) = struct.unpack_from("<H", data, off)
        off += 2
        names.append(data[off:off + length].decode("utf-8"))
        off += length
    size = n**dim
    expected = off + count * size * 8
    if len(data) != expected:
        raise ValueError(f"{path}: size {len(data)} does not match header ({expected})")
    out = {}
    for name in names:
        out[name] = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape((n,) * dim).copy()
        off += size * 8
    return out


def write_dict_csv(path, rows) -> Path:
    """Write a list of flat dicts (per-step diagnostics, MMS tables)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        if rows:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows({k: ("" if v is None else v) for k, v in r.items()} for r in rows)
    return path
