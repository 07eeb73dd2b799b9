"""The ``WSR1`` binary parameter file.

Layout (all integers unsigned 32-bit little-endian)::

    b"WSR1" | version | count | count x entry
    entry = name_len | utf-8 name | rank | rank x extent | float32 LE values

Arrays are stored as float32. Non-numeric metadata (config text, iteration)
travels as a rank-1 array of byte values, which float32 holds exactly.
"""
import os
import struct
import tempfile
from collections import OrderedDict

import numpy as np

from .errors import FormatError

MAGIC = b"WSR1"
VERSION = 1
_U32 = struct.Struct("<I")


def encode_text(text):
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.float32)


def decode_text(values):
    return np.asarray(values).astype(np.uint8).tobytes().decode("utf-8")


def dumps(entries):
    """Serialise an ordered ``name -> array`` mapping to bytes."""
    parts = [MAGIC, _U32.pack(VERSION), _U32.pack(len(entries))]
    for name, value in entries.items():
        arr = np.asarray(value)
        raw = name.encode("utf-8")
        parts.append(_U32.pack(len(raw)))
        parts.append(raw)
        parts.append(_U32.pack(arr.ndim))
        parts.extend(_U32.pack(d) for d in arr.shape)
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf, source):
        self.buf = buf
        self.pos = 0
        self.source = source

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise FormatError(
                f"{self.source}: truncated while reading {what} at offset {self.pos} "
                f"(need {n} bytes, {len(self.buf) - self.pos} left)"
            )
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return _U32.unpack(self.take(4, what))[0]


def loads(buf, source="<bytes>"):
    """Parse bytes produced by :func:`dumps`; arrays come back as float32."""
    r = _Reader(bytes(buf), source)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r} at offset 0 (expected {MAGIC!r})")
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported version {version} at offset 4")
    count = r.u32("entry count")
    out = OrderedDict()
    for i in range(count):
        start = r.pos
        name_len = r.u32(f"entry {i} name length")
        try:
            name = r.take(name_len, f"entry {i} name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{source}: entry {i} name at offset {start + 4} is not utf-8") from exc
        rank = r.u32(f"entry {name!r} rank")
        if rank > 8:
            raise FormatError(f"{source}: implausible rank {rank} for {name!r} at offset {r.pos - 4}")
        shape = tuple(r.u32(f"entry {name!r} extent") for _ in range(rank))
        n = int(np.prod(shape, dtype=np.int64))
        data = r.take(4 * n, f"entry {name!r} values")
        out[name] = np.frombuffer(data, dtype="<f4").reshape(shape).astype(np.float32)
    if r.pos != len(r.buf):
        raise FormatError(f"{source}: {len(r.buf) - r.pos} trailing bytes at offset {r.pos}")
    return out


def save(path, entries):
    """Write atomically: temp file in the same directory, then rename."""
    payload = dumps(entries)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".wsr-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read(), source=str(path))
