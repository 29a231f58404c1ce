"""Standalone writers for the .cseb container and its .jsonl text sidecar.

Byte layout (kept in lockstep with the clozeselect reader):

* bytes 0-3: ASCII magic ``CSEB``
* bytes 4-7: format version, u32 little-endian (1)
* bytes 8-15: header byte length, u64 little-endian
* header: UTF-8 JSON ``{"kind", "count", "dim", "ids"}``, ascii-escaped,
  compact separators
* payload: count*dim float32 little-endian values, row-major

This module deliberately has no dependency on the consumer package; the
file format is the interface.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CSEB"
FORMAT_VERSION = 1


def escape_token(token: str) -> str:
    """Make a token string safe as a stable id.

    Backslash and control characters are the only things that could hurt a
    JSON-header id or a log line; everything else passes through untouched.
    The mapping is injective, so distinct tokens stay distinct.
    """
    out = []
    for ch in token:
        if ch == "\\":
            out.append("\\\\")
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\x{ord(ch):02x}")
        else:
            out.append(ch)
    return "".join(out)


def write_embedding_rows(path, kind: str, ids, matrix) -> None:
    """Write a .cseb file; raises ValueError on anything the reader would reject."""
    if kind not in ("vocab", "instance"):
        raise ValueError(f"kind must be 'vocab' or 'instance', got {kind!r}")
    ids = [str(i) for i in ids]
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise ValueError(f"matrix must be 2-d, got shape {matrix.shape}")
    count, dim = matrix.shape
    if dim < 1:
        raise ValueError("dim must be positive")
    if len(ids) != count:
        raise ValueError(f"{len(ids)} ids for {count} rows")
    if len(set(ids)) != count:
        raise ValueError("ids are not unique")
    if not np.isfinite(matrix).all():
        raise ValueError("matrix contains non-finite values")

    header = json.dumps(
        {"kind": kind, "count": count, "dim": dim, "ids": ids},
        ensure_ascii=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(Path(path), "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(matrix.tobytes())


def write_texts(path, pairs) -> None:
    """Write the JSONL sidecar from an iterable of (id, text) pairs."""
    lines = []
    for ident, text in pairs:
        lines.append(json.dumps({"id": str(ident), "text": text},
                                ensure_ascii=True, separators=(",", ":")))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""),
                          encoding="utf-8")
