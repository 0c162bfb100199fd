"""
Binary weight container.

Layout (all integers little-endian)::

    8 bytes   magic  b"SFV1-W1\\n"
    8 bytes   uint64 manifest length M
    M bytes   UTF-8 JSON manifest:
              {"version": "SFV1-W1", "meta": {...},
               "tensors": [{"name", "shape", "dtype", "offset", "nbytes"}, ...]}
    ...       tensor payload; offsets are relative to the payload start

Tensors are stored C-contiguous with explicit little-endian dtypes.
"""

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import LoadError

VERSION = "SFV1-W1"
MAGIC = b"SFV1-W1\n"


def save_tensors(path, tensors, meta=None):
    """Write a ``{name: array}`` mapping to ``path``."""
    entries = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        data = arr.tobytes()
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": arr.dtype.str,
            "offset": offset,
            "nbytes": len(data),
        })
        blobs.append(data)
        offset += len(data)
    manifest = json.dumps({"version": VERSION, "meta": meta or {}, "tensors": entries},
                          sort_keys=True).encode("utf-8")
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", len(manifest)))
            fh.write(manifest)
            for data in blobs:
                fh.write(data)
    except OSError as exc:
        raise OSError(f"cannot write weight container {path}: {exc}") from exc


def is_container(path):
    with open(path, "rb") as fh:
        return fh.read(len(MAGIC)) == MAGIC


def load_tensors(path):
    """Read a container written by :func:`save_tensors`; returns ``(tensors, meta)``."""
    raw = Path(path).read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise LoadError(f"{path}: not an {VERSION} container")
    head = len(MAGIC) + 8
    if len(raw) < head:
        raise LoadError(f"{path}: truncated header")
    (mlen,) = struct.unpack("<Q", raw[len(MAGIC):head])
    if len(raw) < head + mlen:
        raise LoadError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(raw[head:head + mlen].decode("utf-8"))
    except ValueError as exc:
        raise LoadError(f"{path}: malformed manifest: {exc}") from exc
    if manifest.get("version") != VERSION:
        raise LoadError(f"{path}: unsupported version {manifest.get('version')!r}")
    payload = memoryview(raw)[head + mlen:]
    tensors = {}
    for entry in manifest["tensors"]:
        start, n = entry["offset"], entry["nbytes"]
        if start + n > len(payload):
            raise LoadError(f"{path}: tensor {entry['name']!r} truncated")
        arr = np.frombuffer(payload[start:start + n], dtype=np.dtype(entry["dtype"]))
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return tensors, manifest.get("meta", {})


def save_model_weights(path, model, meta=None):
    save_tensors(path, model.state_dict(), meta)


def load_model_weights(path, model):
    tensors, meta = load_tensors(path)
    model.load_state_dict(tensors)
    return meta
