"""Versioned binary checkpoint container.

Layout (all integers little-endian):

    bytes 0..3    magic ``NMIC``
    bytes 4..7    format version (uint32, currently 1)
    bytes 8..15   JSON header length (uint64)
    ...           UTF-8 JSON header
    ...           raw tensor payload

The JSON header carries arbitrary metadata under ``meta`` plus a ``tensors``
index of ``{name, shape, dtype, offset, nbytes}`` records; offsets are
relative to the payload start.  Tensors round-trip bit-exactly.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

MAGIC = b"NMIC"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Raised when a checkpoint file is missing, truncated, or malformed."""


def save_checkpoint(path, tensors: Dict[str, np.ndarray], meta: dict) -> None:
    """Write tensors plus JSON-serializable metadata atomically."""
    path = Path(path)
    index = []
    offset = 0
    blobs = []
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        # tobytes() serializes in C order for any layout, including 0-d
        blob = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        index.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": arr.dtype.name,
            "offset": offset,
            "nbytes": len(blob),
        })
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": meta, "tensors": index},
                        sort_keys=True).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path) -> Tuple[Dict[str, np.ndarray], dict]:
    """Read a checkpoint back into (tensors, meta)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc})") from exc
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    header_len = struct.unpack("<Q", raw[8:16])[0]
    if 16 + header_len > len(raw):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[16:16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    payload = raw[16 + header_len:]
    tensors = {}
    for rec in header["tensors"]:
        start = rec["offset"]
        end = start + rec["nbytes"]
        if end > len(payload):
            raise CheckpointError(f"{path}: truncated tensor {rec['name']!r}")
        arr = np.frombuffer(payload[start:end],
                            dtype=np.dtype(rec["dtype"]).newbyteorder("<"))
        tensors[rec["name"]] = arr.reshape(rec["shape"]).copy()
    return tensors, header["meta"]
