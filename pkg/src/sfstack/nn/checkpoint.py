"""Self-describing binary checkpoints for network parameters.

Layout (little-endian):

    bytes 0..7    magic  b"SFSTACKC"
    bytes 8..11   uint32 format version (currently 1)
    bytes 12..15  uint32 header length H
    bytes 16..16+H-1   header, UTF-8 JSON:
        {"version": 1,
         "meta": {...caller-supplied...},
         "tensors": [{"name": str, "shape": [int...],
                      "dtype": "float64", "offset": int}, ...]}
    remainder     tensor payload: each tensor's row-major (C-order) bytes at
                  its header offset, measured from the end of the header.

Any reader that can parse JSON and reshape flat float64 buffers can reload
these files; stacked critics store one tensor per layer with the block index
as the leading axis.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SFSTACKC"
FORMAT_VERSION = 1


def save_checkpoint(path, named_arrays, meta: dict | None = None):
    """Write (name, array) pairs plus a metadata dict to path."""
    tensors = []
    offset = 0
    arrays = []
    for name, arr in named_arrays:
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        tensors.append(
            {"name": name, "shape": list(arr.shape), "dtype": "float64", "offset": offset}
        )
        offset += arr.nbytes
        arrays.append(arr)
    header = json.dumps(
        {"version": FORMAT_VERSION, "meta": meta or {}, "tensors": tensors},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        fh.write(header)
        for arr in arrays:
            fh.write(arr.tobytes(order="C"))


def load_checkpoint(path):
    """Read a checkpoint; returns (dict name -> array, meta dict)."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    version, header_len = struct.unpack("<II", data[8:16])
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[16 : 16 + header_len].decode("utf-8"))
    payload = data[16 + header_len :]
    out = {}
    for spec in header["tensors"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape)) if shape else 1
        start = spec["offset"]
        arr = np.frombuffer(payload, dtype=np.float64, count=n, offset=start).reshape(shape)
        out[spec["name"]] = arr.copy()
    return out, header.get("meta", {})


def load_into(path, named_arrays):
    """Load a checkpoint into existing arrays, validating names and shapes."""
    loaded, meta = load_checkpoint(path)
    for name, arr in named_arrays:
        if name not in loaded:
            raise KeyError(f"checkpoint missing tensor {name!r}")
        src = loaded[name]
        if src.shape != arr.shape:
            raise ValueError(f"tensor {name!r}: checkpoint shape {src.shape} != {arr.shape}")
        arr[:] = src
    return meta
