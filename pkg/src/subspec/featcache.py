"""Binary feature cache ("SSLM").

Layout, all little-endian::

    b"SSLM" | version u16
    repeated records:
        id_len u16 | clip_id utf-8 | window u32 | band u16 | dims u32 x 3 | float32 payload

The payload is the (frames, mels, channels) tensor in C (frame-major) order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .dsp import LogmelTensor
from .errors import DataError

MAGIC = b"SSLM"
VERSION = 1
_HEADER = struct.Struct("<4sH")
_META = struct.Struct("<IH3I")


class CacheFormatError(DataError):
    pass


def encode_records(tensors) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION)]
    for t in tensors:
        cid = t.clip_id.encode("utf-8")
        data = np.ascontiguousarray(t.data, dtype="<f4")
        if data.ndim != 3:
            raise CacheFormatError(f"record {t.clip_id!r} has {data.ndim} dims, expected 3")
        parts.append(struct.pack("<H", len(cid)) + cid)
        parts.append(_META.pack(t.window_index, t.band_index, *data.shape))
        parts.append(data.tobytes())
    return b"".join(parts)


def decode_records(blob: bytes) -> list[LogmelTensor]:
    if len(blob) < _HEADER.size:
        raise CacheFormatError("cache file too short")
    magic, version = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise CacheFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CacheFormatError(f"unsupported cache version {version}")
    pos = _HEADER.size
    out = []
    while pos < len(blob):
        try:
            (n,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            cid = blob[pos:pos + n].decode("utf-8")
            pos += n
            window, band, *dims = _META.unpack_from(blob, pos)
            pos += _META.size
        except struct.error as exc:
            raise CacheFormatError("truncated record header") from exc
        count = int(np.prod(dims))
        end = pos + 4 * count
        if end > len(blob):
            raise CacheFormatError(f"truncated payload for {cid!r}")
        data = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(dims).astype(np.float32)
        out.append(LogmelTensor(data, band, cid, window))
        pos = end
    return out


def write_cache(path, tensors) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_records(tensors))
    tmp.replace(path)


def read_cache(path) -> list[LogmelTensor]:
    return decode_records(Path(path).read_bytes())
