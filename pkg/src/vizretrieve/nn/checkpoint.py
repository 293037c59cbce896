"""Binary container for named, shaped arrays.

Layout: 8-byte magic, little-endian u32 header length, UTF-8 JSON header,
little-endian u32 CRC32 of the header bytes, then the raw array data in
header order (C-contiguous, forced little-endian).  The header carries a
format version plus a free-form meta dict for provenance (seed, config
hash, dimensions).
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import VizRetrieveError

MAGIC = b"VZARR001"
FORMAT_VERSION = 1

_DTYPES = {"float64": "<f8", "float32": "<f4", "int64": "<i8"}


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries = []
    blobs = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dtype_name = arr.dtype.name
        if dtype_name not in _DTYPES:
            raise VizRetrieveError(f"unsupported dtype {dtype_name} for {name!r}")
        arr = arr.astype(_DTYPES[dtype_name])
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dtype_name})
        blobs.append(arr.tobytes())
    header = json.dumps(
        {"version": FORMAT_VERSION, "meta": meta or {}, "entries": entries},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(struct.pack("<I", zlib.crc32(header)))
        for blob in blobs:
            fh.write(blob)


def load_arrays(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise VizRetrieveError(f"{path}: not an array container (bad magic)")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header_bytes = fh.read(header_len)
        (crc,) = struct.unpack("<I", fh.read(4))
        if zlib.crc32(header_bytes) != crc:
            raise VizRetrieveError(f"{path}: header checksum mismatch")
        header = json.loads(header_bytes.decode("utf-8"))
        if header.get("version") != FORMAT_VERSION:
            raise VizRetrieveError(f"{path}: unsupported container version")
        arrays: dict[str, np.ndarray] = {}
        for entry in header["entries"]:
            dtype = np.dtype(_DTYPES[entry["dtype"]])
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise VizRetrieveError(f"{path}: truncated data for {entry['name']!r}")
            arrays[entry["name"]] = np.frombuffer(raw, dtype=dtype).reshape(entry["shape"]).copy()
    return arrays, header.get("meta", {})


def file_digest(path: str | Path) -> str:
    """Short content hash used as a checkpoint id in index headers."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]
