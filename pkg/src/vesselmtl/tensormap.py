"""Binary named-tensor container.

Layout (little-endian)::

    b"MTLT"  u16 version  u32 count
    per entry: u16 name_len, name (UTF-8), u8 rank, u32 dims[rank],
               u8 type tag (0 = float32, 1 = float64), raw payload
"""
import struct

import numpy as np

from .errors import BadMagicError, CorruptError, TruncatedError, UnsupportedVersionError

MAGIC = b"MTLT"
VERSION = 1
_TAGS = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def encode_tensor_map(entries):
    parts = [MAGIC, struct.pack("<HI", VERSION, len(entries))]
    for name, arr in entries.items():
        arr = np.asarray(arr)
        dt = arr.dtype.newbyteorder("<")
        if dt not in _TAGS:
            raise TypeError(f"entry {name!r}: unsupported element type {arr.dtype}")
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF or arr.ndim > 0xFF:
            raise ValueError(f"entry {name!r}: name or rank too large")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(struct.pack("<B", _TAGS[dt]))
        parts.append(np.ascontiguousarray(arr, dtype=dt).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf, offset):
        self.buf = memoryview(buf)
        self.pos = offset

    def take(self, n, what, entry=None):
        if self.pos + n > len(self.buf):
            where = f" in entry {entry!r}" if entry is not None else ""
            raise TruncatedError(f"truncated {what}{where}: need {n} bytes at offset {self.pos}", entry=entry)
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what, entry=None):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what, entry))


def decode_tensor_map(buf, offset=0, allow_trailing=False):
    """Decode a tensor map starting at ``offset``.

    Returns ``(entries, end_offset)``. Raises a :class:`FormatError` subclass
    describing the first problem found.
    """
    r = _Reader(buf, offset)
    if bytes(r.take(4, "magic")) != MAGIC:
        raise BadMagicError("not a tensor map (bad magic bytes)")
    (version,) = r.unpack("<H", "version")
    if version != VERSION:
        raise UnsupportedVersionError(f"tensor map version {version} is not supported (expected {VERSION})")
    (count,) = r.unpack("<I", "entry count")
    entries = {}
    for idx in range(count):
        label = f"#{idx}"
        (nlen,) = r.unpack("<H", "name length", label)
        try:
            name = bytes(r.take(nlen, "name", label)).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptError(f"entry {label}: name is not valid UTF-8") from exc
        if name in entries:
            raise CorruptError(f"duplicate entry name {name!r}")
        (rank,) = r.unpack("<B", "rank", name)
        dims = r.unpack(f"<{rank}I", "dims", name)
        (tag,) = r.unpack("<B", "type tag", name)
        if tag not in _DTYPES:
            raise CorruptError(f"entry {name!r}: unknown element type tag {tag}")
        dt = _DTYPES[tag]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        payload = r.take(nbytes, "payload", name)
        entries[name] = np.frombuffer(payload, dtype=dt).reshape(dims).astype(dt.newbyteorder("="), copy=True)
    if not allow_trailing and r.pos != len(r.buf):
        raise CorruptError(f"{len(r.buf) - r.pos} trailing bytes after the last entry")
    return entries, r.pos


def save_tensor_map(path, entries):
    with open(path, "wb") as fh:
        fh.write(encode_tensor_map(entries))


def load_tensor_map(path):
    with open(path, "rb") as fh:
        return decode_tensor_map(fh.read())[0]
