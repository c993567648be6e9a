"""On-disk formats shared across the pipeline.

* embedding text: ``id f1 f2 ...`` per line, floats written with ``repr`` so
  a write/read/write cycle is byte-stable.
* feature matrices: ``OZFT`` magic, u32 version, u64 rows, u64 dim, then
  little-endian float32 row-major.
* checkpoints: ``OZSL`` magic, u32 version, u32 metadata length, UTF-8 JSON
  metadata, u32 block count, per block u32 ndim + u32 dims, then the raw
  little-endian float32 blocks in declaration order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

FEATURE_MAGIC = b"OZFT"
FEATURE_VERSION = 1
CHECKPOINT_MAGIC = b"OZSL"
CHECKPOINT_VERSION = 1


class FormatError(ValueError):
    pass


def write_embedding_text(path, ids, vectors: np.ndarray) -> None:
    vectors = np.asarray(vectors, dtype=np.float64)
    if len(ids) != vectors.shape[0]:
        raise FormatError("number of ids and rows differ")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ident, row in zip(ids, vectors):
            if not ident or any(ch.isspace() for ch in ident):
                raise FormatError(f"identifier {ident!r} cannot be written")
            fh.write(ident + " " + " ".join(repr(float(x)) for x in row) + "\n")


def read_embedding_text(path) -> tuple[tuple[str, ...], np.ndarray]:
    ids, rows = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            try:
                rows.append([float(x) for x in parts[1:]])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric entry") from None
            if rows and len(rows[-1]) != len(rows[0]):
                raise FormatError(f"{path}:{lineno}: inconsistent dimension")
            ids.append(parts[0])
    if not rows:
        raise FormatError(f"{path}: no vectors")
    return tuple(ids), np.array(rows, dtype=np.float64)


def write_features(path, features: np.ndarray) -> None:
    arr = np.ascontiguousarray(features, dtype="<f4")
    if arr.ndim != 2:
        raise FormatError("feature matrix must be 2-D")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<IQQ", FEATURE_VERSION, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def read_features(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic")
    if len(raw) < 24:
        raise FormatError(f"{path}: truncated header")
    version, n, d = struct.unpack_from("<IQQ", raw, 4)
    if version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    body = raw[4 + 20:]
    if len(body) != 4 * n * d:
        raise FormatError(f"{path}: expected {n}x{d} floats, found {len(body) // 4}")
    return np.frombuffer(body, dtype="<f4").reshape(n, d).astype(np.float64)


def write_lines(path, items) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item in items:
            fh.write(f"{item}\n")


def read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def write_pairs(path, pairs) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for a, b in pairs:
            fh.write(f"{a}\t{b}\n")


def read_pairs(path) -> list[tuple[str, str]]:
    out = []
    for lineno, line in enumerate(read_lines(path), 1):
        parts = line.split("\t")
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno}: expected 2 tab-separated fields")
        out.append((parts[0], parts[1]))
    return out


def write_triples(path, triples) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for h, r, t in triples:
            fh.write(f"{h}\t{r}\t{t}\n")


def read_triples(path) -> list[tuple[str, str, str]]:
    out = []
    for lineno, line in enumerate(read_lines(path), 1):
        parts = line.split("\t")
        if len(parts) != 3 or not all(parts):
            raise FormatError(f"{path}:{lineno}: expected 3 tab-separated fields")
        out.append((parts[0], parts[1], parts[2]))
    return out


def write_checkpoint(path, blocks: list[np.ndarray], metadata: dict) -> None:
    meta = json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(meta)))
        fh.write(meta)
        fh.write(struct.pack("<I", len(blocks)))
        for b in blocks:
            fh.write(struct.pack("<I", b.ndim))
            fh.write(struct.pack(f"<{b.ndim}I", *b.shape))
        for b in blocks:
            fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def read_checkpoint(path) -> tuple[list[np.ndarray], dict]:
    try:
        return _parse_checkpoint(path, Path(path).read_bytes())
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt checkpoint ({exc})") from None


def _parse_checkpoint(path, raw: bytes) -> tuple[list[np.ndarray], dict]:
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic")
    version, mlen = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    off = 12
    metadata = json.loads(raw[off:off + mlen].decode("utf-8"))
    off += mlen
    (nblocks,) = struct.unpack_from("<I", raw, off)
    off += 4
    shapes = []
    for _ in range(nblocks):
        (ndim,) = struct.unpack_from("<I", raw, off)
        off += 4
        shapes.append(struct.unpack_from(f"<{ndim}I", raw, off))
        off += 4 * ndim
    blocks = []
    for shape in shapes:
        n = int(np.prod(shape)) if shape else 1
        if off + 4 * n > len(raw):
            raise FormatError(f"{path}: truncated checkpoint")
        blocks.append(np.frombuffer(raw, dtype="<f4", count=n, offset=off).reshape(shape).astype(np.float64))
        off += 4 * n
    if off != len(raw):
        raise FormatError(f"{path}: {len(raw) - off} trailing bytes")
    return blocks, metadata
