"""Versioned, checksummed binary container for named arrays plus JSON metadata.

Layout (little endian)::

    magic  b"KFCK"     4 bytes
    version            uint32
    payload length     uint64
    sha256(payload)    32 bytes
    payload            records

Each record is ``name_len:uint32, name:utf8, dtype_len:uint32, dtype:ascii,
ndim:uint32, shape:uint64 * ndim, nbytes:uint64, raw bytes``.  Metadata is
stored as a ``uint8`` record named ``__meta__`` holding UTF-8 JSON.  The
encoding has no timestamps, so identical inputs give identical files.
"""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ChecksumError, DataError, VersionError

MAGIC = b"KFCK"
VERSION = 1
_HEAD = struct.Struct("<4sIQ32s")


def _record(name, arr):
    arr = np.ascontiguousarray(arr)
    if arr.dtype.byteorder == ">":
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    name_b = name.encode()
    dtype_b = arr.dtype.str.encode()
    parts = [struct.pack("<I", len(name_b)), name_b, struct.pack("<I", len(dtype_b)), dtype_b,
             struct.pack("<I", arr.ndim), struct.pack(f"<{arr.ndim}Q", *arr.shape),
             struct.pack("<Q", arr.nbytes), arr.tobytes()]
    return b"".join(parts)


def dumps(arrays, meta=None) -> bytes:
    records = []
    if meta is not None:
        blob = json.dumps(meta, sort_keys=True).encode()
        records.append(_record("__meta__", np.frombuffer(blob, dtype=np.uint8)))
    for name in sorted(arrays):
        records.append(_record(name, np.asarray(arrays[name])))
    payload = b"".join(records)
    return _HEAD.pack(MAGIC, VERSION, len(payload), hashlib.sha256(payload).digest()) + payload


def loads(data: bytes):
    """Return ``(arrays, meta)``; raises on bad magic, version or checksum."""
    if len(data) < _HEAD.size:
        raise ChecksumError("checkpoint truncated before header end")
    magic, version, length, digest = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise DataError("not a kernelfusion checkpoint")
    if version != VERSION:
        raise VersionError(
            f"checkpoint format version {version} is not supported by this release "
            f"(expected {VERSION}); re-run `kernelfusion train` to upgrade it"
        )
    payload = data[_HEAD.size :]
    if len(payload) != length or hashlib.sha256(payload).digest() != digest:
        raise ChecksumError("checkpoint checksum mismatch: file is corrupted or truncated")
    arrays, meta, pos = {}, None, 0
    while pos < len(payload):
        (n,) = struct.unpack_from("<I", payload, pos); pos += 4
        name = payload[pos : pos + n].decode(); pos += n
        (n,) = struct.unpack_from("<I", payload, pos); pos += 4
        dtype = np.dtype(payload[pos : pos + n].decode()); pos += n
        (ndim,) = struct.unpack_from("<I", payload, pos); pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", payload, pos); pos += 8 * ndim
        (nbytes,) = struct.unpack_from("<Q", payload, pos); pos += 8
        arr = np.frombuffer(payload[pos : pos + nbytes], dtype=dtype).reshape(shape).copy()
        pos += nbytes
        if name == "__meta__":
            meta = json.loads(arr.tobytes().decode())
        else:
            arrays[name] = arr
    return arrays, meta


def save(path, arrays, meta=None):
    Path(path).write_bytes(dumps(arrays, meta))


def load(path):
    return loads(Path(path).read_bytes())
