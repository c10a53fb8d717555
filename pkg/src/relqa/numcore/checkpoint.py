"""Checkpoint container: a magic line, a JSON header line, raw float64 payload.

Layout::

    RELQA-CKPT\n
    {"version": 1, "meta": {...}, "tensors": [{"name", "shape", "offset"}, ...]}\n
    <little-endian float64 values, row-major, concatenated in header order>

Offsets count float64 values from the start of the payload. Tensors are
written in sorted name order so identical states give identical bytes.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from relqa.errors import CheckpointError

MAGIC = b"RELQA-CKPT\n"
VERSION = 1


def dump_checkpoint(state: Mapping[str, np.ndarray], meta: Mapping[str, Any] | None = None) -> bytes:
    entries, chunks, offset = [], [], 0
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name], dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.size
    header = {"version": VERSION, "meta": dict(meta or {}), "tensors": entries}
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + head + b"\n" + b"".join(chunks)


def parse_checkpoint(blob: bytes) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    if not blob.startswith(MAGIC):
        raise CheckpointError("not a checkpoint (bad magic line)")
    rest = blob[len(MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(rest[:nl])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"malformed checkpoint header: {exc}") from None
    if header.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')!r}")
    payload = np.frombuffer(rest[nl + 1:], dtype="<f8")
    state = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        size = math.prod(shape)
        lo = entry["offset"]
        if lo + size > payload.size:
            raise CheckpointError(f"payload too short for tensor {entry['name']!r}")
        state[entry["name"]] = payload[lo:lo + size].reshape(shape).astype(np.float64)
    return header["meta"], state


def save_checkpoint(path, state, meta=None) -> None:
    Path(path).write_bytes(dump_checkpoint(state, meta))


def load_checkpoint(path) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    return parse_checkpoint(Path(path).read_bytes())
