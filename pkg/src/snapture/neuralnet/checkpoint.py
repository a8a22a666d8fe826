"""Checkpoint file format.

Layout (all text lines are UTF-8, newline-terminated):

    SNAPCKPT 1
    <config JSON on one line>
    <tensor count>
    <name> <dim0,dim1,...> <offset>     (offset in float32 elements)
    ...
    BLOB
    <raw little-endian float32 data>

Round-trips are bit-exact for float32 tensors; anything else is rejected.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = "SNAPCKPT"
VERSION = 1

__all__ = ["save_checkpoint", "load_checkpoint"]


def save_checkpoint(path: Path | str, config: dict, tensors: dict[str, np.ndarray]):
    lines = [f"{MAGIC} {VERSION}", json.dumps(config, sort_keys=True), str(len(tensors))]
    blobs = []
    offset = 0
    for name, array in tensors.items():
        if " " in name or "\n" in name:
            raise ValueError(f"tensor name {name!r} may not contain whitespace")
        if array.dtype != np.float32:
            raise ValueError(f"checkpoint tensors must be float32, got {array.dtype} for {name}")
        dims = ",".join(str(d) for d in array.shape) or "scalar"
        lines.append(f"{name} {dims} {offset}")
        blob = np.ascontiguousarray(array, dtype="<f4").tobytes()
        blobs.append(blob)
        offset += array.size
    payload = ("\n".join(lines) + "\nBLOB\n").encode() + b"".join(blobs)
    from ..frame_io import atomic_write_bytes

    atomic_write_bytes(path, payload)


def load_checkpoint(path: Path | str) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    marker = b"\nBLOB\n"
    split = data.index(marker)
    header_lines = data[:split].decode().split("\n")
    blob = data[split + len(marker) :]

    magic, version = header_lines[0].split()
    if magic != MAGIC:
        raise ValueError(f"not a checkpoint file (magic {magic!r})")
    if int(version) != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    config = json.loads(header_lines[1])
    count = int(header_lines[2])
    tensors: dict[str, np.ndarray] = {}
    for line in header_lines[3 : 3 + count]:
        name, dims, offset = line.split()
        shape = () if dims == "scalar" else tuple(int(d) for d in dims.split(","))
        size = int(np.prod(shape)) if shape else 1
        start = int(offset) * 4
        array = np.frombuffer(blob, dtype="<f4", count=size, offset=start)
        tensors[name] = array.reshape(shape).copy()
    return config, tensors
