"""Binary checkpoint format for policies.

Layout: ``b"ACGF"``, u32 LE version, u64 LE header length, UTF-8 JSON header
(vocabulary, hyperparameters, meta, tensor manifest), then every tensor as
little-endian float64 in manifest order.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
import torch

from .policy import DTYPE, PolicyConfig, PolicyParams, tensor_shapes
from .vocab import Vocabulary

MAGIC = b"ACGF"
VERSION = 1


class CheckpointError(ValueError):
    pass


class BadMagic(CheckpointError):
    pass


class VersionUnsupported(CheckpointError):
    pass


class ManifestShapeMismatch(CheckpointError):
    pass


class TruncatedFile(CheckpointError):
    pass


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def encode_checkpoint(params: PolicyParams, vocab: Vocabulary, meta: dict | None = None) -> bytes:
    arrays = params.numpy()
    header = {
        "vocabulary": list(vocab.tokens),
        "hyperparameters": params.config.to_dict(),
        "meta": meta or {},
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", len(blob)), blob]
    for arr in arrays.values():
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(params: PolicyParams, vocab: Vocabulary, meta: dict | None, path: str | os.PathLike) -> None:
    atomic_write_bytes(path, encode_checkpoint(params, vocab, meta))


def decode_checkpoint(data: bytes) -> tuple[PolicyParams, Vocabulary, dict]:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic("not a policy checkpoint")
    if len(data) < 16:
        raise TruncatedFile("header truncated")
    (version,) = struct.unpack("<I", data[4:8])
    if version != VERSION:
        raise VersionUnsupported(f"version {version}")
    (hlen,) = struct.unpack("<Q", data[8:16])
    if 16 + hlen > len(data):
        raise TruncatedFile("header truncated")
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
        config = PolicyConfig.from_dict(header["hyperparameters"])
        vocab = Vocabulary(list(header["vocabulary"]))
        manifest = [(t["name"], tuple(int(s) for s in t["shape"])) for t in header["tensors"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise ManifestShapeMismatch(f"malformed header: {exc}") from None
    expected = tensor_shapes(config)
    if [m[0] for m in manifest] != list(expected):
        raise ManifestShapeMismatch("tensor names do not match the hyperparameters")
    for name, shape in manifest:
        if expected[name] != shape:
            raise ManifestShapeMismatch(f"{name}: manifest {shape} != expected {expected[name]}")
    if config.vocab_size != len(vocab):
        raise ManifestShapeMismatch("vocabulary size disagrees with hyperparameters")
    offset = 16 + hlen
    tensors = {}
    for name, shape in manifest:
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if offset + nbytes > len(data):
            have = (len(data) - offset) // 8
            raise TruncatedFile(f"{name}: manifest declares {count} values, file holds {have}")
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape)
        tensors[name] = torch.tensor(arr.astype(np.float64), dtype=DTYPE)
        offset += nbytes
    if offset != len(data):
        raise ManifestShapeMismatch(f"{len(data) - offset} trailing bytes after tensor data")
    return PolicyParams(config, tensors), vocab, header.get("meta", {})


def load_checkpoint(path: str | os.PathLike) -> tuple[PolicyParams, Vocabulary, dict]:
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())
