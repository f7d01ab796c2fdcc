"""On-disk formats: raw arrays with a JSON sidecar, and the CSV tables.

An array ``name`` is stored as ``name.bin`` (little-endian, row-major) plus
``name.json`` describing shape, element type, byte order and layout.  Complex
data is always written as interleaved 32-bit (real, imag) pairs, real data as
64-bit floats, integers as 64-bit and booleans as single bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .dictionary import Dictionary
from .phantom import TISSUES

_STORAGE = {"c": "<c8", "f": "<f8", "i": "<i8", "u": "<i8", "b": "|u1"}


class FormatError(ValueError):
    """A file exists but its content does not follow the expected format."""


def _paths(path):
    path = Path(path)
    if path.suffix in (".bin", ".json"):
        path = path.with_suffix("")
    return path.with_suffix(".bin"), path.with_suffix(".json")


def write_array(path, array, **meta) -> Path:
    """Write ``array`` to ``path.bin`` + ``path.json``; extra keywords go into the sidecar."""
    array = np.asarray(array)
    kind = array.dtype.kind
    if kind not in _STORAGE:
        raise TypeError(f"cannot store arrays of dtype {array.dtype}")
    stored = np.ascontiguousarray(array, dtype=np.dtype(_STORAGE[kind]))
    header = {
        "shape": list(array.shape),
        "dtype": stored.dtype.str,
        "kind": {"c": "complex", "f": "real", "i": "integer", "u": "integer", "b": "bool"}[kind],
        "byte_order": "little",
        "layout": "row-major",
        "complex_storage": "interleaved float32" if kind == "c" else None,
        **meta,
    }
    bin_path, json_path = _paths(path)
    bin_path.parent.mkdir(parents=True, exist_ok=True)
    bin_path.write_bytes(stored.tobytes())
    json_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return bin_path


def read_header(path) -> dict:
    _, json_path = _paths(path)
    try:
        return json.loads(json_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{json_path}: invalid sidecar ({exc})") from exc


def read_array(path) -> np.ndarray:
    bin_path, json_path = _paths(path)
    header = read_header(path)
    try:
        dtype = np.dtype(header["dtype"])
        shape = tuple(int(n) for n in header["shape"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{json_path}: missing or malformed shape/dtype") from exc
    raw = bin_path.read_bytes()
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(raw) != expected:
        raise FormatError(f"{bin_path}: {len(raw)} bytes, header implies {expected}")
    out = np.frombuffer(raw, dtype=dtype).reshape(shape)
    if header.get("kind") == "complex":
        return out.astype(complex)
    if header.get("kind") == "bool":
        return out.astype(bool)
    return out.astype(out.dtype.newbyteorder("="))


def _write_rows(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _read_rows(path, header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got != list(header):
            raise FormatError(f"{path}: expected header {','.join(header)}, got {got}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append(row)
    return rows


def write_dictionary(directory, d: Dictionary) -> None:
    directory = Path(directory)
    write_array(directory / "atoms", d.atoms, atoms=d.size, frames=d.length)
    _write_rows(directory / "lut.csv", ("t1_ms", "t2_ms"), [(repr(float(a)), repr(float(b))) for a, b in d.lut])


def read_dictionary(directory) -> Dictionary:
    directory = Path(directory)
    atoms = read_array(directory / "atoms")
    try:
        lut = np.array([[float(v) for v in row] for row in _read_rows(directory / "lut.csv", ("t1_ms", "t2_ms"))])
    except ValueError as exc:
        raise FormatError(f"{directory / 'lut.csv'}: {exc}") from exc
    return Dictionary(atoms, lut.reshape(-1, 2))


def write_tissue_table(path, tissues=TISSUES) -> Path:
    return _write_rows(path, ("label", "t1_ms", "t2_ms", "pd"),
                       [(k, repr(t1), repr(t2), repr(pd)) for k, (t1, t2, pd) in tissues.items()])


def write_trajectory_csv(path, coords) -> Path:
    """``(L, Ns, 2)`` coordinates as rows ``frame, kx_rad, ky_rad``."""
    coords = np.asarray(coords, dtype=float)
    rows = ((f, repr(float(kx)), repr(float(ky))) for f in range(coords.shape[0]) for kx, ky in coords[f])
    return _write_rows(path, ("frame", "kx_rad", "ky_rad"), rows)


def read_trajectory_csv(path) -> np.ndarray:
    rows = _read_rows(path, ("frame", "kx_rad", "ky_rad"))
    frames = np.array([int(r[0]) for r in rows])
    k = np.array([[float(r[1]), float(r[2])] for r in rows])
    n_frames = frames.max() + 1 if frames.size else 0
    counts = np.bincount(frames, minlength=n_frames)
    if n_frames == 0 or np.any(counts != counts[0]):
        raise FormatError(f"{path}: every frame must list the same number of samples")
    order = np.argsort(frames, kind="stable")
    return k[order].reshape(n_frames, counts[0], 2)


DIAGNOSTIC_COLUMNS = ("iter", "cost", "data_term", "manifold_term", "nuclear_term", "lambda1_n", "wall_ms")


def write_diagnostics(path, diagnostics) -> Path:
    rows = [[repr(float(row[c])) if c != "iter" else str(row[c]) for c in DIAGNOSTIC_COLUMNS] for row in diagnostics]
    return _write_rows(path, DIAGNOSTIC_COLUMNS, rows)


def read_diagnostics(path) -> list[dict]:
    rows = _read_rows(path, DIAGNOSTIC_COLUMNS)
    return [{c: (int(v) if c == "iter" else float(v)) for c, v in zip(DIAGNOSTIC_COLUMNS, r)} for r in rows]


REPORT_COLUMNS = ("method", "L", "trajectory", "noise_sigma", "metric", "value")


def write_report(path, rows) -> Path:
    return _write_rows(path, REPORT_COLUMNS, [[r[c] if c != "value" else repr(float(r[c])) for c in REPORT_COLUMNS]
                                              for r in rows])


def read_report(path) -> list[dict]:
    return [dict(zip(REPORT_COLUMNS, r)) for r in _read_rows(path, REPORT_COLUMNS)]
