"""FSR1 checkpoint files: model parameters plus Adam moments.

Layout (little-endian)::

    b"FSR1" | u32 version=1 | tensor block (parameters)
    tensor block (Adam m) | tensor block (Adam v) | u64 t | f64 lr | u32 crc32

    tensor block := u32 count, then per tensor:
        u16 name_len | utf-8 name | u8 rank | u32 dims[rank] | f32 data[prod(dims)]

The CRC covers every byte before it.
"""

from __future__ import annotations

import os
import struct
import zlib

import numpy as np

from .optim import AdamState
from .unet import UNetModel

MAGIC = b"FSR1"
VERSION = 1


class CheckpointError(Exception):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class ShapeMismatchError(CheckpointError):
    pass


class ChecksumError(CheckpointError):
    pass


def _pack_block(tensors: dict[str, np.ndarray]) -> bytes:
    parts = [struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def encode_checkpoint(model: UNetModel, state: AdamState | None = None) -> bytes:
    if state is None:
        state = AdamState.for_params(model.params)
    body = b"".join([
        MAGIC,
        struct.pack("<I", VERSION),
        _pack_block(model.params),
        _pack_block({k: state.m[k] for k in model.params}),
        _pack_block({k: state.v[k] for k in model.params}),
        struct.pack("<Qd", state.t, state.lr),
    ])
    return body + struct.pack("<I", zlib.crc32(body))


def checkpoint_save(model: UNetModel, state: AdamState | None, path) -> None:
    data = encode_checkpoint(model, state)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedCheckpointError(
                f"file truncated while reading {what} at byte {self.pos} "
                f"(need {n}, have {len(self.buf) - self.pos})"
            )
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def block(self, section: str) -> dict[str, np.ndarray]:
        (count,) = self.unpack("<I", f"{section} tensor count")
        out = {}
        for _ in range(count):
            (nlen,) = self.unpack("<H", f"{section} name length")
            try:
                name = self.take(nlen, f"{section} name").decode("utf-8")
            except UnicodeDecodeError as exc:
                raise CheckpointError(f"{section}: tensor name is not UTF-8") from exc
            (rank,) = self.unpack("<B", f"{section} rank of {name}")
            dims = self.unpack(f"<{rank}I", f"{section} dims of {name}")
            n = int(np.prod(dims, dtype=np.int64)) if rank else 1
            raw = self.take(4 * n, f"{section} data of {name}")
            out[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
        return out


def decode_checkpoint(buf: bytes) -> tuple[UNetModel, AdamState]:
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise BadMagicError(f"bad magic: expected {MAGIC!r}, got {buf[:4]!r}")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise VersionMismatchError(f"unsupported checkpoint version {version} (expected {VERSION})")
    params = r.block("parameters")
    m = r.block("adam m")
    v = r.block("adam v")
    t, lr = r.unpack("<Qd", "optimizer scalars")
    body_end = r.pos
    (crc,) = r.unpack("<I", "crc32")
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} unexpected trailing bytes")
    if zlib.crc32(buf[:body_end]) != crc:
        raise ChecksumError("CRC32 mismatch: checkpoint is corrupted")

    model = UNetModel(params)
    try:
        model.validate()
    except (KeyError, IndexError, ValueError) as exc:
        raise ShapeMismatchError(f"parameters do not form a U-Net: {exc}") from exc
    for section, moments in (("adam m", m), ("adam v", v)):
        if set(moments) != set(params):
            raise ShapeMismatchError(f"{section} names do not match the parameters")
        for k, arr in moments.items():
            if arr.shape != params[k].shape:
                raise ShapeMismatchError(
                    f"{section} {k} has shape {arr.shape}, parameter has {params[k].shape}"
                )
    state = AdamState(m={k: m[k] for k in params}, v={k: v[k] for k in params}, t=t, lr=lr)
    return model, state


def checkpoint_load(path) -> tuple[UNetModel, AdamState]:
    with open(path, "rb") as f:
        buf = f.read()
    return decode_checkpoint(buf)
