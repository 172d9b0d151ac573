"""Little-endian binary checkpoint format.

Layout::

    magic  b"TCGANCKP"
    u32    format version
    u64    JSON block length, then the UTF-8 JSON block (config echo + scalars)
    u32    entry count, then per entry:
             u16 name length, name (UTF-8)
             u8  kind: b"f" float64 array, b"b" raw bytes
             u8  ndim, ndim x u64 dims            (kind f)
             u64 byte length                      (kind b)
             payload
    u32    CRC-32 of every preceding byte
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"TCGANCKP"
FORMAT_VERSION = 1


class CheckpointFormatError(ValueError):
    pass


@dataclass
class CheckpointRecord:
    config: dict
    step: int
    arrays: dict[str, np.ndarray] = field(default_factory=dict)
    blobs: dict[str, bytes] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def __eq__(self, other) -> bool:
        if not isinstance(other, CheckpointRecord):
            return NotImplemented
        return (
            self.config == other.config
            and self.step == other.step
            and self.meta == other.meta
            and self.version == other.version
            and self.blobs == other.blobs
            and self.arrays.keys() == other.arrays.keys()
            and all(
                a.shape == other.arrays[k].shape and a.tobytes() == other.arrays[k].tobytes()
                for k, a in self.arrays.items()
            )
        )


def encode(record: CheckpointRecord) -> bytes:
    head = json.dumps({"config": record.config, "step": record.step, "meta": record.meta},
                      sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<I", record.version), struct.pack("<Q", len(head)), head,
             struct.pack("<I", len(record.arrays) + len(record.blobs))]
    for name, arr in record.arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        nb = name.encode()
        parts += [struct.pack("<H", len(nb)), nb, b"f", struct.pack("<B", arr.ndim),
                  struct.pack(f"<{arr.ndim}Q", *arr.shape), arr.tobytes()]
    for name, blob in record.blobs.items():
        nb = name.encode()
        parts += [struct.pack("<H", len(nb)), nb, b"b", struct.pack("<Q", len(blob)), blob]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointFormatError("checkpoint truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode(buf: bytes) -> CheckpointRecord:
    if len(buf) < len(MAGIC) + 8 or not buf.startswith(MAGIC):
        raise CheckpointFormatError("not a checkpoint (bad magic)")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    version = struct.unpack("<I", buf[len(MAGIC):len(MAGIC) + 4])[0]
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
    if zlib.crc32(body) != crc:
        raise CheckpointFormatError("checkpoint checksum mismatch (corrupted or truncated)")
    r = _Reader(body)
    r.take(len(MAGIC) + 4)
    (hlen,) = r.unpack("<Q")
    try:
        head = json.loads(r.take(hlen).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"bad header block: {exc}") from exc
    (count,) = r.unpack("<I")
    arrays, blobs = {}, {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode()
        kind = r.take(1)
        if kind == b"f":
            (ndim,) = r.unpack("<B")
            shape = r.unpack(f"<{ndim}Q") if ndim else ()
            n = int(np.prod(shape)) if ndim else 1
            arrays[name] = np.frombuffer(r.take(8 * n), dtype="<f8").reshape(shape).astype(np.float64)
        elif kind == b"b":
            (blen,) = r.unpack("<Q")
            blobs[name] = r.take(blen)
        else:
            raise CheckpointFormatError(f"unknown entry kind {kind!r} for {name!r}")
    if r.pos != len(body):
        raise CheckpointFormatError("trailing bytes after last entry")
    return CheckpointRecord(head["config"], head["step"], arrays, blobs, head.get("meta", {}), version)


def save_checkpoint(record: CheckpointRecord, path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode(record))
    tmp.replace(path)


def load_checkpoint(path) -> CheckpointRecord:
    return decode(Path(path).read_bytes())
