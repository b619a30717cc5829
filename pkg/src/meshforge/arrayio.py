"""Raw array payloads with JSON sidecars, plus hashing helpers.

All payloads are little-endian with explicit dtype tags in the sidecar, so
records are portable and byte-reproducible.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Dict

import numpy as np

_DTYPES = {"f32": "<f4", "f64": "<f8", "u8": "u1", "u32": "<u4", "i64": "<i8"}
_NAMES = {v: k for k, v in _DTYPES.items()}


def dump_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_array(path, arr: np.ndarray, dtype: str) -> dict:
    """Write a raw payload; returns its sidecar field description."""
    if dtype not in _DTYPES:
        raise ValueError(f"unsupported payload dtype {dtype!r}")
    path = Path(path)
    data = np.ascontiguousarray(arr).astype(_DTYPES[dtype])
    path.write_bytes(data.tobytes())
    return {"file": path.name, "dtype": dtype, "shape": list(arr.shape)}


def read_array(directory, field: dict) -> np.ndarray:
    data = (Path(directory) / field["file"]).read_bytes()
    arr = np.frombuffer(data, dtype=_DTYPES[field["dtype"]])
    return arr.reshape(field["shape"])


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def hash_tree(directory, exclude=()) -> Dict[str, str]:
    """Relative path -> sha256 for every file under directory."""
    directory = Path(directory)
    out: Dict[str, str] = {}
    for p in sorted(directory.rglob("*")):
        if p.is_file():
            rel = p.relative_to(directory).as_posix()
            if rel not in exclude:
                out[rel] = sha256_file(p)
    return out
