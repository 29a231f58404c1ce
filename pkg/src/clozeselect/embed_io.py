"""Binary interchange for embedding matrices plus the instance-text sidecar.

File container (.cseb):

* bytes 0-3: ASCII magic ``CSEB``
* bytes 4-7: format version, u32 little-endian (currently 1)
* bytes 8-15: header byte length, u64 little-endian
* header: UTF-8 JSON ``{"kind": "vocab"|"instance", "count": N, "dim": D,
  "ids": [...]}``
* payload: N*D float32 little-endian values, row-major

The sidecar (.jsonl) carries one ``{"id": ..., "text": ...}`` object per line.

Loading validates everything eagerly: magic, version, header shape, id
uniqueness, payload size and per-row finiteness.  A set that survives
``load_embedding_set`` is safe to feed to the geometry layer unchecked.
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateId,
    HeaderMalformed,
    IoFailure,
    MagicMismatch,
    MalformedLine,
    NonFiniteValue,
    SizeMismatch,
    VersionUnsupported,
)

MAGIC = b"CSEB"
FORMAT_VERSION = 1


class SetKind(str, enum.Enum):
    VOCAB = "vocab"
    INSTANCE = "instance"


@dataclass(eq=False)
class EmbeddingSet:
    """A validated, immutable block of embeddings with stable string ids."""

    kind: SetKind
    dim: int
    count: int
    ids: tuple[str, ...]
    matrix: np.ndarray  # count x dim, float32

    def __post_init__(self):
        self.matrix.flags.writeable = False

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.dim == other.dim
            and self.count == other.count
            and self.ids == other.ids
            and self.matrix.tobytes() == other.matrix.tobytes()
        )


@dataclass(frozen=True)
class InstanceText:
    id: str
    text: str


def make_embedding_set(kind: SetKind, ids, matrix) -> EmbeddingSet:
    """Validate and freeze an embedding set built in memory."""
    kind = SetKind(kind)
    ids = tuple(str(i) for i in ids)
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise SizeMismatch(f"matrix must be 2-d, got shape {matrix.shape}")
    count, dim = matrix.shape
    if dim < 1:
        raise HeaderMalformed("dim must be positive")
    if len(ids) != count:
        raise SizeMismatch(f"{len(ids)} ids for {count} rows")
    _check_unique(ids)
    bad = _first_nonfinite_row(matrix)
    if bad is not None:
        raise NonFiniteValue(bad)
    return EmbeddingSet(kind=kind, dim=dim, count=count, ids=ids, matrix=matrix)


def load_embedding_set(path) -> EmbeddingSet:
    """Read and fully validate a .cseb file."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    if len(blob) < 4 or blob[:4] != MAGIC:
        raise MagicMismatch(f"{path}: bad magic")
    if len(blob) < 16:
        raise HeaderMalformed(f"{path}: truncated before header")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != FORMAT_VERSION:
        raise VersionUnsupported(f"{path}: version {version}, expected {FORMAT_VERSION}")
    (header_len,) = struct.unpack_from("<Q", blob, 8)
    if 16 + header_len > len(blob):
        raise HeaderMalformed(f"{path}: header length {header_len} exceeds file")

    try:
        header = json.loads(blob[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderMalformed(f"{path}: {exc}") from exc
    if not isinstance(header, dict):
        raise HeaderMalformed(f"{path}: header is not an object")

    for key in ("kind", "count", "dim", "ids"):
        if key not in header:
            raise HeaderMalformed(f"{path}: header missing {key!r}")
    kind_raw = header["kind"]
    if kind_raw not in (SetKind.VOCAB.value, SetKind.INSTANCE.value):
        raise HeaderMalformed(f"{path}: unknown kind {kind_raw!r}")
    count, dim = header["count"], header["dim"]
    if not isinstance(count, int) or isinstance(count, bool) or count < 0:
        raise HeaderMalformed(f"{path}: bad count {count!r}")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise HeaderMalformed(f"{path}: bad dim {dim!r}")
    ids = header["ids"]
    if not isinstance(ids, list) or len(ids) != count or not all(isinstance(i, str) for i in ids):
        raise HeaderMalformed(f"{path}: ids must be {count} strings")
    _check_unique(ids)

    payload = blob[16 + header_len :]
    expected = count * dim * 4
    if len(payload) != expected:
        raise SizeMismatch(f"{path}: payload {len(payload)} bytes, expected {expected}")
    matrix = np.frombuffer(payload, dtype="<f4").reshape(count, dim).copy()
    bad = _first_nonfinite_row(matrix)
    if bad is not None:
        raise NonFiniteValue(bad, f"{path}: non-finite value in row {bad} (id {ids[bad]!r})")
    return EmbeddingSet(kind=SetKind(kind_raw), dim=dim, count=count, ids=tuple(ids), matrix=matrix)


def write_embedding_set(es: EmbeddingSet, path) -> None:
    """Write a .cseb file; byte output is a pure function of the set."""
    path = Path(path)
    bad = _first_nonfinite_row(es.matrix)
    if bad is not None:
        raise NonFiniteValue(bad)
    header = json.dumps(
        {"kind": es.kind.value, "count": es.count, "dim": es.dim, "ids": list(es.ids)},
        ensure_ascii=True,
        separators=(",", ":"),
    ).encode("utf-8")
    payload = np.ascontiguousarray(es.matrix, dtype="<f4").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", FORMAT_VERSION))
            fh.write(struct.pack("<Q", len(header)))
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_instance_texts(path) -> list[InstanceText]:
    """Read the JSONL text sidecar; empty file yields an empty list."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    out: list[InstanceText] = []
    seen: set[str] = set()
    for lineno, line in enumerate(raw.splitlines(), start=1):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            raise MalformedLine(lineno, f"{path}:{lineno}: invalid JSON") from None
        if not isinstance(obj, dict):
            raise MalformedLine(lineno, f"{path}:{lineno}: not an object")
        ident, text = obj.get("id"), obj.get("text")
        if not isinstance(ident, str) or not ident or not isinstance(text, str):
            raise MalformedLine(lineno, f"{path}:{lineno}: need string 'id' and 'text'")
        if ident in seen:
            raise DuplicateId(f"{path}:{lineno}: duplicate id {ident!r}")
        seen.add(ident)
        out.append(InstanceText(id=ident, text=text))
    return out


def write_instance_texts(texts, path) -> None:
    path = Path(path)
    lines = []
    for t in texts:
        lines.append(json.dumps({"id": t.id, "text": t.text}, ensure_ascii=True, separators=(",", ":")))
    try:
        path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _check_unique(ids) -> None:
    seen: set[str] = set()
    for i in ids:
        if i in seen:
            raise DuplicateId(f"duplicate id {i!r}")
        seen.add(i)


def _first_nonfinite_row(matrix: np.ndarray):
    finite = np.isfinite(matrix).all(axis=1)
    if finite.all():
        return None
    return int(np.argmin(finite))
