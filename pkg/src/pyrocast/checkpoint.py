"""Model checkpoint container: JSON header plus one float32 parameter blob.

Layout, little-endian:

    magic  b"PYCK1"
    u32    header length in bytes
    bytes  UTF-8 JSON header {"kind", "arch", "params": [[name, shape], ...]}
    f32    parameter values concatenated in header order

The ``arch`` mapping is free-form per model kind and also carries the
normalization stats the model was trained against, so a checkpoint is
self-contained for inference.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, TruncatedFileError

MAGIC = b"PYCK1"
_LEN = struct.Struct("<I")


@dataclass
class Checkpoint:
    kind: str
    arch: dict
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.arrays = {name: np.asarray(arr, dtype=np.float32)
                       for name, arr in self.arrays.items()}


def parameter_fingerprint(arrays: dict[str, np.ndarray]) -> str:
    """sha256 over parameter names and exact float32 bytes, order-sensitive."""
    digest = hashlib.sha256()
    for name, arr in arrays.items():
        digest.update(name.encode())
        digest.update(b"\x00")
        digest.update(np.ascontiguousarray(arr, dtype=np.float32).tobytes())
    return digest.hexdigest()


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    header = {
        "kind": ckpt.kind,
        "arch": ckpt.arch,
        "params": [[name, list(arr.shape)] for name, arr in ckpt.arrays.items()],
    }
    raw = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_LEN.pack(len(raw)))
        fh.write(raw)
        for arr in ckpt.arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype=np.float32).tobytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    with open(path, "rb") as fh:
        payload = fh.read()
    if len(payload) < len(MAGIC) + _LEN.size:
        raise TruncatedFileError(f"{path}: shorter than the fixed header")
    if payload[:len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic {payload[:len(MAGIC)]!r}")
    (header_len,) = _LEN.unpack_from(payload, len(MAGIC))
    start = len(MAGIC) + _LEN.size
    if len(payload) < start + header_len:
        raise TruncatedFileError(f"{path}: header cut short")
    try:
        header = json.loads(payload[start:start + header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header: {exc}") from exc
    for key in ("kind", "arch", "params"):
        if key not in header:
            raise FormatError(f"{path}: header missing key {key!r}")
    arrays: dict[str, np.ndarray] = {}
    offset = start + header_len
    for name, shape in header["params"]:
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 4
        if len(payload) < offset + nbytes:
            raise TruncatedFileError(f"{path}: blob cut short at parameter {name}")
        flat = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        arrays[name] = flat.reshape(shape).copy()
        offset += nbytes
    if offset != len(payload):
        raise FormatError(f"{path}: {len(payload) - offset} trailing bytes")
    return Checkpoint(header["kind"], header["arch"], arrays)
