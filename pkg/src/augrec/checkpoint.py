"""Binary checkpoint container shared by every model in the package.

Layout::

    8 bytes   magic b"AUGRCKPT"
    4 bytes   container version, uint32 little-endian
    4 bytes   header length H, uint32 little-endian
    H bytes   UTF-8 JSON header: {"meta": {...}, "tensors": [{name, dtype, shape, offset, nbytes}]}
    ...       tensor blobs, little-endian, C order, at the recorded offsets

``meta`` always carries ``kind``, ``inventory_digest`` and the model
dimensions.  The file contains no timestamps, so identical parameters give
identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import IncompatibleArtifactError, InventoryMismatchError, MissingArtifactError

MAGIC = b"AUGRCKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sII")


def save_checkpoint(path, state: dict, meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table, blobs, offset = [], [], 0
    for name in sorted(state):
        arr = state[name]
        arr = arr.detach().cpu().numpy() if isinstance(arr, torch.Tensor) else np.asarray(arr)
        arr = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))
        raw = arr.tobytes()
        table.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                      "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta, "tensors": table}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)
    return path


def load_checkpoint(path, kind: str = None, inventory_digest: str = None):
    """Return ``(state, meta)``; verifies kind and inventory when given."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"{path}: checkpoint not found")
    raw = path.read_bytes()
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC or version != VERSION:
        raise IncompatibleArtifactError(f"{path}: not a version-{VERSION} checkpoint")
    header = json.loads(raw[_PREFIX.size:_PREFIX.size + hlen])
    base = _PREFIX.size + hlen
    meta = header["meta"]
    if kind is not None and meta.get("kind") != kind:
        raise IncompatibleArtifactError(f"{path}: expected a {kind} checkpoint, found {meta.get('kind')}")
    if inventory_digest is not None and meta.get("inventory_digest") != inventory_digest:
        raise InventoryMismatchError(f"{path}: trained on a different phoneme inventory")
    state = {}
    for entry in header["tensors"]:
        start = base + entry["offset"]
        arr = np.frombuffer(raw[start:start + entry["nbytes"]], dtype=np.dtype(entry["dtype"]))
        state[entry["name"]] = torch.from_numpy(arr.reshape(entry["shape"]).copy())
    return state, meta
