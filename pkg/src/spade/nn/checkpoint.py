"""SPW1 parameter checkpoints.

Layout: magic "SPW1" | u32 LE manifest length | manifest JSON (ordered list
of {"name", "shape"}) | raw float64 little-endian buffers in manifest order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import FormatError

_MAGIC = b"SPW1"


def save_checkpoint(path, state: dict[str, np.ndarray], meta: dict | None = None) -> None:
    manifest = {
        "tensors": [{"name": k, "shape": list(np.asarray(v).shape)} for k, v in state.items()],
        "meta": meta or {},
    }
    mbytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(mbytes)))
        f.write(mbytes)
        for v in state.values():
            f.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 8:
        raise FormatError("truncated checkpoint header", byte_offset=len(raw))
    if raw[:4] != _MAGIC:
        raise FormatError(f"bad checkpoint magic {raw[:4]!r}", byte_offset=0)
    (mlen,) = struct.unpack_from("<I", raw, 4)
    if 8 + mlen > len(raw):
        raise FormatError("manifest extends past end of file", byte_offset=8)
    try:
        manifest = json.loads(raw[8 : 8 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"bad manifest: {e}", byte_offset=8)
    off = 8 + mlen
    state = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        end = off + 8 * n
        if end > len(raw):
            raise FormatError(f"buffer for {entry['name']} truncated", byte_offset=off)
        state[entry["name"]] = (
            np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape).copy()
        )
        off = end
    if off != len(raw):
        raise FormatError(f"{len(raw) - off} trailing bytes after last buffer", byte_offset=off)
    return state, manifest.get("meta", {})
