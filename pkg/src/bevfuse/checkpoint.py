"""Little-endian binary checkpoints.

Layout (all integers little-endian)::

    magic        8 bytes   b"BEVFCKPT"
    version      u32
    config_hash  32 bytes  SHA-256 of the canonical config JSON
    config_len   u32, then config_len bytes of UTF-8 JSON
    step         u64
    n_params     u32, then n_params tensor entries
    n_optim      u32, then n_optim tensor entries
    crc32        u32 over every preceding byte

    tensor entry:
      name_len u16, name (UTF-8)
      dtype    u8   (0 float32, 1 float64, 2 int64)
      ndim     u8, then ndim x u32 shape
      nbytes   u64, then the raw little-endian values
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"BEVFCKPT"
VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
DTYPE_CODES = {np.dtype(v).str: k for k, v in DTYPES.items()}


class CheckpointError(ValueError):
    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        super().__init__(message if offset is None else f"{message} (at byte {offset})")


@dataclass
class Checkpoint:
    config: dict
    config_hash: bytes
    params: dict[str, np.ndarray]
    optim: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    version: int = VERSION


def _encode_entry(name: str, arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    le = arr.dtype.newbyteorder("<")
    code = DTYPE_CODES.get(le.str)
    if code is None:
        raise CheckpointError(f"unsupported dtype {arr.dtype} for {name!r}")
    raw = np.ascontiguousarray(arr, dtype=le).tobytes()
    key = name.encode()
    head = struct.pack("<H", len(key)) + key + struct.pack("<BB", code, arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + struct.pack("<Q", len(raw)) + raw


def encode(ckpt: Checkpoint) -> bytes:
    if len(ckpt.config_hash) != 32:
        raise CheckpointError("config hash must be 32 bytes")
    cfg = json.dumps(ckpt.config, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<I", ckpt.version), ckpt.config_hash, struct.pack("<I", len(cfg)), cfg,
             struct.pack("<Q", ckpt.step), struct.pack("<I", len(ckpt.params))]
    parts += [_encode_entry(k, v) for k, v in ckpt.params.items()]
    parts.append(struct.pack("<I", len(ckpt.optim)))
    parts += [_encode_entry(k, v) for k, v in ckpt.optim.items()]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated while reading {what}", self.pos)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def entry(self) -> tuple[str, np.ndarray]:
        start = self.pos
        (n,) = self.unpack("<H", "entry name length")
        try:
            name = self.take(n, "entry name").decode()
        except UnicodeDecodeError as e:
            raise CheckpointError("entry name is not UTF-8", start) from e
        code, ndim = self.unpack("<BB", f"header of {name!r}")
        if code not in DTYPES:
            raise CheckpointError(f"unknown dtype code {code} for {name!r}", self.pos - 2)
        shape = self.unpack(f"<{ndim}I", f"shape of {name!r}")
        (nbytes,) = self.unpack("<Q", f"size of {name!r}")
        dt = DTYPES[code]
        if nbytes != int(np.prod(shape, dtype=np.int64)) * dt.itemsize:
            raise CheckpointError(f"size of {name!r} disagrees with its shape", self.pos - 8)
        raw = self.take(nbytes, f"values of {name!r}")
        return name, np.frombuffer(raw, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))


def decode(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointError("bad magic; not a checkpoint", 0)
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})", 8)
    config_hash = r.take(32, "config hash")
    (n,) = r.unpack("<I", "config length")
    cfg_at = r.pos
    try:
        config = json.loads(r.take(n, "config").decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError("config block is not valid JSON", cfg_at) from e
    (step,) = r.unpack("<Q", "step")
    params = {}
    (n_params,) = r.unpack("<I", "parameter count")
    for _ in range(n_params):
        k, v = r.entry()
        params[k] = v
    optim = {}
    (n_optim,) = r.unpack("<I", "optimizer entry count")
    for _ in range(n_optim):
        k, v = r.entry()
        optim[k] = v
    crc_at = r.pos
    (crc,) = r.unpack("<I", "checksum")
    if r.pos != len(buf):
        raise CheckpointError("trailing bytes after checksum", r.pos)
    if crc != zlib.crc32(buf[:crc_at]):
        raise CheckpointError("checksum mismatch", crc_at)
    return Checkpoint(config, config_hash, params, optim, step, version)


def save(path, ckpt: Checkpoint) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode(ckpt))
    tmp.replace(path)


def load(path, expected_hash: bytes | None = None, force: bool = False) -> Checkpoint:
    """Read and fully validate a checkpoint before returning anything."""
    ckpt = decode(Path(path).read_bytes())
    if expected_hash is not None and ckpt.config_hash != expected_hash and not force:
        raise CheckpointError("config hash mismatch; pass force=True to load anyway")
    return ckpt
