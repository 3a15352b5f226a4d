"""Versioned, portable model checkpoints.

Layout (documented in docs/checkpoint_format.md):

    bytes 0..3    magic b"TMCK"
    bytes 4..7    format version, uint32 little-endian (currently 1)
    bytes 8..15   header length N, uint64 little-endian
    N bytes       UTF-8 JSON header (sorted keys):
                  {"kind", "config", "tensors": [{"name","shape","frozen"}…],
                   "extra"}
    rest          the tensors' float64 data, little-endian, row-major,
                  concatenated in header order

Byte order is fixed little-endian, so round-trips are bit-exact on any
host.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .models import Model, ModelConfig, build_model

MAGIC = b"TMCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint file is malformed or inconsistent with the model."""


def save_checkpoint(path, kind: str, config: dict, tensors, extra: dict | None = None) -> None:
    """`tensors` is an iterable of (name, float64 ndarray, frozen flag)."""
    tensors = [(name, np.ascontiguousarray(arr, dtype="<f8"), bool(frozen))
               for name, arr, frozen in tensors]
    header = {
        "kind": kind,
        "config": config,
        "tensors": [{"name": name, "shape": list(arr.shape), "frozen": frozen}
                    for name, arr, frozen in tensors],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr, _ in tensors:
            fh.write(arr.tobytes())


def load_checkpoint(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    try:
        header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header: {e}") from e
    offset = 16 + hlen
    tensors = {}
    for spec in header["tensors"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated tensor data for {spec['name']!r}")
        arr = np.frombuffer(raw[offset:end], dtype="<f8").reshape(shape)
        tensors[spec["name"]] = (arr.astype(np.float64), bool(spec["frozen"]))
        offset = end
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return {"kind": header["kind"], "config": header["config"],
            "tensors": tensors, "extra": header.get("extra", {})}


def save_model(model: Model, path, extra: dict | None = None) -> None:
    tensors = [(name, p.tensor.data, p.frozen) for name, p in model.parameters()]
    save_checkpoint(path, model.kind, model.config.to_dict(), tensors, extra)


def load_model(path) -> Model:
    """Rebuild the architecture from (kind, config) and restore tensors."""
    ckpt = load_checkpoint(path)
    config = ModelConfig.from_dict(ckpt["config"])
    model = build_model(ckpt["kind"], config, seed=0)
    stored = ckpt["tensors"]
    for name, p in model.parameters():
        if name not in stored:
            raise CheckpointError(f"checkpoint lacks tensor {name!r}")
        arr, frozen = stored[name]
        if arr.shape != p.tensor.data.shape:
            raise CheckpointError(
                f"tensor {name!r}: checkpoint shape {arr.shape} != model shape "
                f"{p.tensor.data.shape}")
        p.tensor.data[...] = arr
        p.frozen = frozen
    model_names = {name for name, _ in model.parameters()}
    orphans = set(stored) - model_names
    if orphans:
        raise CheckpointError(f"checkpoint has unknown tensors: {sorted(orphans)}")
    return model
