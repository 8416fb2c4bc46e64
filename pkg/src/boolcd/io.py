"""Serialization of state matrices and small JSON helpers.

Binary layout (little endian)::

    b"BCD1" | u32 T | u32 N | T*N float64, row major
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .reservoir import StateMatrix, as_array

MAGIC = b"BCD1"
_HEADER = struct.Struct("<4sII")


def fmt(value) -> str:
    """Locale-independent shortest round-trip decimal for a float."""
    value = float(value)
    if value == 0.0:
        return "0.0"
    return repr(value)


def write_state_csv(path, state, header: bool = True) -> None:
    values = as_array(state)
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow([f"node{i}" for i in range(values.shape[1])])
        for row in values:
            writer.writerow([fmt(v) for v in row])


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_state_csv(path) -> StateMatrix:
    """Read a state matrix written as CSV; a non-numeric first row is a header."""
    with open(path, newline="", encoding="ascii") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if rows and not all(_is_number(cell) for cell in rows[0]):
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: ragged rows with widths {sorted(widths)}")
    return StateMatrix(np.array([[float(c) for c in r] for r in rows]))


def write_state_binary(path, state) -> None:
    values = np.ascontiguousarray(as_array(state), dtype="<f8")
    t, n = values.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, t, n))
        fh.write(values.tobytes(order="C"))


def read_state_binary(path) -> StateMatrix:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, t, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * t * n
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(t, n)
    return StateMatrix(values.astype(np.float64))


def read_state(path) -> StateMatrix:
    """Dispatch on the file's leading bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return read_state_binary(path)
    return read_state_csv(path)


def write_vector_csv(path, values, name: str = "value") -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        fh.write(name + "\n")
        for v in np.asarray(values, dtype=np.float64).ravel():
            fh.write(fmt(v) + "\n")


def read_vector_csv(path) -> np.ndarray:
    with open(path, encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if lines and not _is_number(lines[0].split(",")[0]):
        lines = lines[1:]
    return np.array([float(ln.split(",")[0]) for ln in lines])


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        if not np.isfinite(value):
            return None if np.isnan(value) else ("inf" if value > 0 else "-inf")
        return value
    return obj


def dump_json(path, obj) -> None:
    """Write ``obj`` as deterministic JSON (sorted keys, non-finite floats as strings)."""
    with open(path, "w", encoding="ascii") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def to_json_text(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True)
