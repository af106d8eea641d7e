"""Flat binary array codec and JSONL helpers shared by dataset and report files.

Arrays are stored as raw little-endian bytes, row-major, next to a JSON
sidecar ``<stem>.json`` carrying ``{"dtype": ..., "shape": [...]}``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

# dtypes allowed on disk; everything is written little-endian
_DTYPES = {
    "float32": "<f4",
    "float64": "<f8",
    "uint8": "|u1",
    "int64": "<i8",
}


def canonical_json(obj) -> str:
    """Deterministic JSON encoding (sorted keys, compact separators)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def save_array(path: str | Path, arr: np.ndarray) -> None:
    path = Path(path)
    name = arr.dtype.name
    if name not in _DTYPES:
        raise ValueError(f"unsupported dtype {name!r} for {path}")
    data = np.ascontiguousarray(arr, dtype=np.dtype(_DTYPES[name]))
    path.write_bytes(data.tobytes())
    meta = {"dtype": name, "shape": list(arr.shape)}
    _sidecar(path).write_text(canonical_json(meta) + "\n")


def load_array(path: str | Path) -> np.ndarray:
    path = Path(path)
    meta = json.loads(_sidecar(path).read_text())
    dtype = np.dtype(_DTYPES[meta["dtype"]])
    flat = np.frombuffer(path.read_bytes(), dtype=dtype)
    arr = flat.reshape(meta["shape"])
    # native-endian writable copy
    return arr.astype(meta["dtype"], copy=True)


def write_jsonl(path: str | Path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(canonical_json(rec) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
