"""Checkpoint container: one JSON header line, then raw little-endian
float32 tensors in header order.

The header records format name, version, the training seed, a free-form
config dict, and the name/shape of every tensor. Values are stored as
float32; loading promotes back to float64.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ContractError

FORMAT_NAME = "mvrectify-params"
FORMAT_VERSION = 1


def save_checkpoint(path, arrays: dict, config: dict | None = None, seed: int | None = None) -> None:
    names = list(arrays)
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "seed": seed,
        "config": config or {},
        "tensors": [
            {"name": n, "shape": list(np.asarray(arrays[n]).shape)} for n in names
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n"
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(blob)
        for n in names:
            arr = np.ascontiguousarray(np.asarray(arrays[n]), dtype="<f4")
            fh.write(arr.tobytes())


def load_checkpoint(path):
    """Returns (arrays, config, seed); arrays come back float64."""
    path = Path(path)
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ContractError(f"unreadable checkpoint header in {path}: {exc}") from exc
        if header.get("format") != FORMAT_NAME:
            raise ContractError(
                f"{path} is not a parameter checkpoint (format={header.get('format')!r})"
            )
        if header.get("version") != FORMAT_VERSION:
            raise ContractError(
                f"unsupported checkpoint version {header.get('version')!r} in {path}"
            )
        arrays = {}
        for entry in header["tensors"]:
            shape = tuple(int(s) for s in entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(4 * count)
            if len(raw) != 4 * count:
                raise ContractError(
                    f"truncated checkpoint {path}: tensor {entry['name']!r} incomplete"
                )
            arrays[entry["name"]] = (
                np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
            )
        trailing = fh.read(1)
        if trailing:
            raise ContractError(f"trailing bytes after last tensor in {path}")
    return arrays, header.get("config", {}), header.get("seed")
