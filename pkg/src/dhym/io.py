"""Field files, CSV tables and run manifests.

A field is stored as raw little-endian float64 in C order (complex entries
get a trailing (re, im) axis) next to a JSON sidecar describing the grid and
carrying a SHA-256 checksum of the raw bytes.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .torus import HermitianField, PotentialField, TorusGrid


def _raw(field) -> tuple[np.ndarray, str]:
    if isinstance(field, PotentialField):
        return np.ascontiguousarray(field.values, dtype="<f8"), "potential"
    if isinstance(field, HermitianField):
        e = field.entries
        return np.ascontiguousarray(np.stack([e.real, e.imag], axis=-1), dtype="<f8"), "hermitian"
    raise TypeError("expected a PotentialField or HermitianField")


def save_field(stem, field, label: str = "") -> Path:
    """Write ``stem.bin`` and ``stem.json``; returns the sidecar path."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    arr, kind = _raw(field)
    data = arr.tobytes()
    grid = field.grid
    meta = {
        "kind": kind,
        "label": label,
        "dtype": "<f8",
        "order": "C",
        "shape": list(arr.shape),
        "complex_dim": grid.complex_dim,
        "resolutions": list(grid.resolutions),
        "periods": list(grid.periods),
        "active_axes": [bool(a) for a in grid.active_axes],
        "sha256": hashlib.sha256(data).hexdigest(),
    }
    stem.with_suffix(".bin").write_bytes(data)
    side = stem.with_suffix(".json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return side


def load_field(stem):
    stem = Path(stem)
    meta = json.loads(stem.with_suffix(".json").read_text())
    data = stem.with_suffix(".bin").read_bytes()
    if hashlib.sha256(data).hexdigest() != meta["sha256"]:
        raise ValueError(f"checksum mismatch for {stem}")
    arr = np.frombuffer(data, dtype="<f8").reshape(meta["shape"]).astype(float)
    grid = TorusGrid(meta["complex_dim"], tuple(meta["resolutions"]), tuple(meta["periods"]))
    if meta["kind"] == "potential":
        return PotentialField(grid, arr)
    return HermitianField(grid, arr[..., 0] + 1j * arr[..., 1])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, header, rows) -> Path:
    """CSV with floats written by repr, so equal values give equal bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def canonical_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default))
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    return str(o)
