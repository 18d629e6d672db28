"""Single-file parameter checkpoints.

Layout::

    b"GNNCKPT\\n"                  magic
    uint64 LE                     header length in bytes
    header                        UTF-8 JSON: format version, name/shape manifest, metadata
    float64 LE blocks             one per manifest entry, in manifest order
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

MAGIC = b"GNNCKPT\n"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_checkpoint(arrays: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    names = sorted(arrays)
    header = {
        "format_version": FORMAT_VERSION,
        "manifest": [{"name": k, "shape": list(np.shape(arrays[k]))} for k in names],
        "meta": meta or {},
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blocks = [np.ascontiguousarray(arrays[k], dtype="<f8").tobytes() for k in names]
    return MAGIC + struct.pack("<Q", len(hb)) + hb + b"".join(blocks)


def decode_checkpoint(buf: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if not buf.startswith(MAGIC):
        raise CheckpointError("not a checkpoint file (bad magic)")
    off = len(MAGIC)
    (hlen,) = struct.unpack_from("<Q", buf, off)
    off += 8
    header = json.loads(buf[off : off + hlen].decode("utf-8"))
    off += hlen
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {header.get('format_version')}")
    arrays = {}
    for entry in header["manifest"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = off + 8 * count
        if end > len(buf):
            raise CheckpointError(f"truncated block for {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8", count=count, offset=off).reshape(shape).astype(np.float64)
        off = end
    if off != len(buf):
        raise CheckpointError("trailing bytes after last block")
    return arrays, header["meta"]


def save_checkpoint(path: str | os.PathLike, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(arrays, meta))


def load_checkpoint(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())
