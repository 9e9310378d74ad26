"""Dense tensor archives: the on-disk checkpoint format and tensor metrics.

A checkpoint is a single file: an 8-byte little-endian unsigned header
length, a UTF-8 JSON header mapping tensor names to
``{"dtype": "F32"|"F64", "shape": [...], "data_offsets": [begin, end]}``
(plus an optional ``"__metadata__"`` string map), followed by the raw
row-major little-endian buffers addressed by the offsets.  Serialization is
deterministic: names are stored lexicographically and the header JSON uses
sorted keys, so saving the same archive twice produces identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .errors import (
    ArchiveFormatError,
    ArchiveIntegrityError,
    ShapeMismatchError,
    ValidationError,
    ZeroNormError,
)

_DTYPE_TAGS = {"F32": np.dtype("<f4"), "F64": np.dtype("<f8")}
_TAG_FOR_KIND = {np.dtype(np.float32): "F32", np.dtype(np.float64): "F64"}

HEADER_PREFIX_BYTES = 8


def _check_tensor(name: str, arr: np.ndarray) -> np.ndarray:
    if arr.dtype not in _TAG_FOR_KIND:
        raise ValidationError(
            f"tensor '{name}' has unsupported dtype {arr.dtype}; expected float32 or float64"
        )
    arr = np.ascontiguousarray(arr)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"tensor '{name}' contains non-finite values")
    return arr


class NamedTensorArchive:
    """Immutable ordered map from tensor name to dense float array.

    Iteration order is always lexicographic by name.  All tensors in one
    archive share a single dtype.  Construction validates finiteness, so any
    archive in circulation satisfies the format invariants.
    """

    __slots__ = ("_entries", "_metadata")

    def __init__(
        self,
        entries: Mapping[str, np.ndarray],
        metadata: Mapping[str, str] | None = None,
    ):
        checked: dict[str, np.ndarray] = {}
        dtypes = set()
        for name in sorted(entries):
            if not isinstance(name, str) or not name:
                raise ValidationError(f"invalid tensor name {name!r}")
            if name == "__metadata__":
                raise ValidationError("'__metadata__' is reserved and cannot name a tensor")
            arr = _check_tensor(name, np.asarray(entries[name]))
            checked[name] = arr
            dtypes.add(arr.dtype)
        if len(dtypes) > 1:
            raise ValidationError(f"archive mixes dtypes {sorted(str(d) for d in dtypes)}")
        meta: dict[str, str] = {}
        for k, v in (metadata or {}).items():
            if not isinstance(k, str) or not isinstance(v, str):
                raise ValidationError("metadata must map strings to strings")
            meta[k] = v
        self._entries = checked
        self._metadata = meta

    @property
    def metadata(self) -> dict[str, str]:
        return dict(self._metadata)

    def names(self) -> list[str]:
        return list(self._entries)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(self._entries.items())

    @property
    def dtype(self) -> np.dtype | None:
        """Shared dtype of all tensors, or None for an empty archive."""
        for arr in self._entries.values():
            return arr.dtype
        return None

    def with_metadata(self, extra: Mapping[str, str]) -> "NamedTensorArchive":
        merged = dict(self._metadata)
        merged.update(extra)
        return NamedTensorArchive(self._entries, merged)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NamedTensorArchive):
            return NotImplemented
        return archives_equal(self, other) and self._metadata == other._metadata

    def __repr__(self) -> str:
        return f"NamedTensorArchive({len(self._entries)} tensors, dtype={self.dtype})"


def archives_equal(a: NamedTensorArchive, b: NamedTensorArchive) -> bool:
    """Bit-exact equality of tensor contents (metadata not compared)."""
    if a.names() != b.names():
        return False
    for name in a.names():
        ta, tb = a[name], b[name]
        if ta.dtype != tb.dtype or ta.shape != tb.shape:
            return False
        if ta.tobytes() != tb.tobytes():
            return False
    return True


def serialize_archive(archive: NamedTensorArchive) -> bytes:
    """Encode an archive to its single-file byte layout."""
    header: dict[str, object] = {}
    if archive.metadata:
        header["__metadata__"] = dict(sorted(archive.metadata.items()))
    offset = 0
    buffers: list[bytes] = []
    for name, arr in archive.items():
        raw = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes()
        header[name] = {
            "dtype": _TAG_FOR_KIND[arr.dtype],
            "shape": list(arr.shape),
            "data_offsets": [offset, offset + len(raw)],
        }
        buffers.append(raw)
        offset += len(raw)
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return struct.pack("<Q", len(header_bytes)) + header_bytes + b"".join(buffers)


def deserialize_archive(blob: bytes) -> NamedTensorArchive:
    """Decode the single-file byte layout back to an archive."""
    if len(blob) < HEADER_PREFIX_BYTES:
        raise ArchiveFormatError(
            f"file too short for header length prefix ({len(blob)} bytes)", byte_offset=0
        )
    (header_len,) = struct.unpack("<Q", blob[:HEADER_PREFIX_BYTES])
    header_end = HEADER_PREFIX_BYTES + header_len
    if header_end > len(blob):
        raise ArchiveFormatError(
            f"declared header length {header_len} exceeds file size {len(blob)}",
            byte_offset=HEADER_PREFIX_BYTES,
        )
    try:
        header = json.loads(blob[HEADER_PREFIX_BYTES:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArchiveFormatError(
            f"header is not valid UTF-8 JSON: {exc}", byte_offset=HEADER_PREFIX_BYTES
        ) from exc
    if not isinstance(header, dict):
        raise ArchiveFormatError("header must be a JSON object", byte_offset=HEADER_PREFIX_BYTES)

    metadata = header.pop("__metadata__", {})
    if not isinstance(metadata, dict) or any(
        not isinstance(k, str) or not isinstance(v, str) for k, v in metadata.items()
    ):
        raise ArchiveFormatError("__metadata__ must be a string-to-string map")

    payload = blob[header_end:]
    entries: dict[str, np.ndarray] = {}
    for name, desc in header.items():
        if not isinstance(desc, dict):
            raise ArchiveFormatError(f"entry '{name}' is not an object")
        try:
            tag = desc["dtype"]
            shape = desc["shape"]
            begin, end = desc["data_offsets"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ArchiveFormatError(f"entry '{name}' missing dtype/shape/data_offsets") from exc
        if tag not in _DTYPE_TAGS:
            raise ArchiveFormatError(f"entry '{name}' has unknown dtype tag {tag!r}")
        if (
            not isinstance(shape, list)
            or any(not isinstance(s, int) or s < 0 for s in shape)
        ):
            raise ArchiveFormatError(f"entry '{name}' has invalid shape {shape!r}")
        dtype = _DTYPE_TAGS[tag]
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        expected = count * dtype.itemsize
        if not (isinstance(begin, int) and isinstance(end, int)) or begin < 0 or end < begin:
            raise ArchiveIntegrityError(f"entry '{name}' has invalid offsets [{begin}, {end}]")
        if end - begin != expected:
            raise ArchiveIntegrityError(
                f"entry '{name}': offsets span {end - begin} bytes but "
                f"shape {shape} x {tag} needs {expected}"
            )
        if end > len(payload):
            raise ArchiveIntegrityError(
                f"entry '{name}': data_offsets [{begin}, {end}] exceed payload "
                f"size {len(payload)}"
            )
        arr = np.frombuffer(payload[begin:end], dtype=dtype).reshape(shape)
        entries[name] = arr.astype(arr.dtype.newbyteorder("="), copy=True)
    return NamedTensorArchive(entries, metadata)


def save_archive(archive: NamedTensorArchive, path: str | Path) -> None:
    """Write the archive; ``load_archive`` of the result is bit-identical."""
    blob = serialize_archive(archive)
    Path(path).write_bytes(blob)


def load_archive(path: str | Path) -> NamedTensorArchive:
    return deserialize_archive(Path(path).read_bytes())


def archive_digest(archive: NamedTensorArchive) -> str:
    """sha256 hex digest of the serialized archive."""
    return hashlib.sha256(serialize_archive(archive)).hexdigest()


def _aligned_f64(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a.ravel().astype(np.float64), b.ravel().astype(np.float64)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """<a, b> / (|a| |b|), accumulated in float64.  In [-1, 1]."""
    fa, fb = _aligned_f64(a, b)
    na = math.sqrt(float(np.dot(fa, fa)))
    nb = math.sqrt(float(np.dot(fb, fb)))
    if na == 0.0 or nb == 0.0:
        raise ZeroNormError("cosine similarity undefined for an all-zero tensor")
    value = float(np.dot(fa, fb)) / (na * nb)
    # float rounding can land a hair outside [-1, 1]
    return min(1.0, max(-1.0, value))


def l2_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance |a - b|, accumulated in float64."""
    fa, fb = _aligned_f64(a, b)
    diff = fa - fb
    return math.sqrt(float(np.dot(diff, diff)))
