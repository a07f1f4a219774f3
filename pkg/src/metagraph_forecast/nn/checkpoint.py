"""JSON parameter checkpoints.

Floats are written with ``repr`` precision by the json module, so values
round-trip bit-exactly.
"""
from __future__ import annotations

import json
from typing import IO

import numpy as np

from ..errors import SchemaError

FORMAT_VERSION = 1


def dump_checkpoint(stream: IO[str], params: dict[str, np.ndarray], *, architecture: dict,
                    seed: int, catalog_hash: str, extra: dict | None = None) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "catalog_hash": catalog_hash,
        "architecture": architecture,
        "seed": seed,
        "parameters": {name: {"shape": list(arr.shape), "values": arr.ravel().tolist()}
                       for name, arr in params.items()},
    }
    if extra:
        payload["extra"] = extra
    json.dump(payload, stream, indent=1, sort_keys=True)
    stream.write("\n")


def load_checkpoint(stream: IO[str]) -> dict:
    payload = json.load(stream)
    if payload.get("format_version") != FORMAT_VERSION:
        raise SchemaError(f"unsupported checkpoint version {payload.get('format_version')!r}")
    params = {}
    for name, entry in payload["parameters"].items():
        params[name] = np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
    payload["parameters"] = params
    return payload
