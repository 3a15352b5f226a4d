"""Small shared helpers."""

from __future__ import annotations

import json
import zlib


def derive_seed(base: int, tag: str) -> int:
    """Stable sub-seed for a named role under one base seed."""
    return (int(base) * 1_000_003 + zlib.crc32(tag.encode())) % (2**31 - 1)


def dump_json(obj, path) -> None:
    """Deterministic JSON file: sorted keys, newline-terminated."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
