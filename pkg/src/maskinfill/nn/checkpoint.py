"""Versioned binary checkpoints: magic, JSON header with a shape manifest, raw float64 payload.

The layout is byte-stable: the header is serialized with sorted keys and the
tensors are written in manifest order, so equal parameters give equal files.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np
import torch

MAGIC = b"MIFCKPT\0"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_tensors(path: str | Path, tensors: dict[str, torch.Tensor], meta: dict) -> None:
    manifest = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = tensors[name].detach().cpu().to(torch.float64).numpy()
        if not np.all(np.isfinite(arr)):
            raise CheckpointError(f"non-finite values in {name}")
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    header = json.dumps({"version": VERSION, "meta": meta, "tensors": manifest}, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)
    os.replace(tmp, path)


def load_tensors(path: str | Path) -> tuple[dict[str, torch.Tensor], dict]:
    raw = Path(path).read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint")
    version, hlen = struct.unpack_from("<II", raw, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = len(MAGIC) + 8
    header = json.loads(raw[start:start + hlen])
    body = start + hlen
    tensors = {}
    for entry in header["tensors"]:
        a = body + entry["offset"]
        arr = np.frombuffer(raw[a:a + entry["nbytes"]], dtype="<f8").reshape(entry["shape"])
        tensors[entry["name"]] = torch.from_numpy(arr.copy())
    return tensors, header["meta"]


def save_module(path: str | Path, module: torch.nn.Module, kind: str, vocab_hash: str, **meta) -> None:
    save_tensors(path, module.state_dict(), {"kind": kind, "hyper": module.hyper, "vocab_hash": vocab_hash, **meta})


def load_module(path: str | Path, cls, kind: str, vocab_hash: str | None = None, config_hash: str | None = None):
    """Rebuild ``cls(**hyper)`` from a checkpoint, refusing mismatched vocabularies or configs."""
    tensors, meta = load_tensors(path)
    if meta.get("kind") != kind:
        raise CheckpointError(f"{path} holds a {meta.get('kind')!r}, expected {kind!r}")
    if vocab_hash is not None and meta.get("vocab_hash") != vocab_hash:
        raise CheckpointError(f"{path} was trained against a different vocabulary")
    if config_hash is not None and meta.get("config_hash") != config_hash:
        raise CheckpointError(f"{path} was produced under a different configuration")
    module = cls(**meta["hyper"])
    module.load_state_dict(tensors)
    return module, meta
