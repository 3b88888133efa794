"""Single-file parameter container.

Layout (documented here; see also README):

    byte 0        format version (currently 1)
    bytes 1..4    uint32 little-endian manifest length N
    bytes 5..5+N  manifest, UTF-8 JSON:
                  {"version": 1, "entries": [{"name", "shape", "dtype"}, ...]}
    remainder     raw array payloads, concatenated in manifest order,
                  row-major, little-endian

Entries are sorted by name so identical array dicts serialize to identical
bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

FORMAT_VERSION = 1


def save_arrays(path, arrays: dict) -> None:
    entries = []
    blobs = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dt = arr.dtype.newbyteorder("<")
        arr = arr.astype(dt, copy=False)
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dt.str})
        blobs.append(arr.tobytes())
    manifest = json.dumps({"version": FORMAT_VERSION, "entries": entries},
                          sort_keys=True).encode("utf-8")
    with open(path, "wb") as fp:
        fp.write(bytes([FORMAT_VERSION]))
        fp.write(struct.pack("<I", len(manifest)))
        fp.write(manifest)
        for blob in blobs:
            fp.write(blob)


def load_arrays(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 5:
        raise CheckpointError(f"{path}: truncated checkpoint")
    if raw[0] != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {raw[0]}")
    (mlen,) = struct.unpack_from("<I", raw, 1)
    if len(raw) < 5 + mlen:
        raise CheckpointError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(raw[5:5 + mlen].decode("utf-8"))
        entries = manifest["entries"]
    except (ValueError, KeyError) as exc:
        raise CheckpointError(f"{path}: bad manifest: {exc}") from exc
    arrays = {}
    offset = 5 + mlen
    for entry in entries:
        try:
            name = entry["name"]
            shape = tuple(int(n) for n in entry["shape"])
            dtype = np.dtype(entry["dtype"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"{path}: bad manifest entry: {exc}") from exc
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path}: array {name!r} extends past end of file")
        arrays[name] = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return arrays
