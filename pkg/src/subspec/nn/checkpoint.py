"""Model checkpoints ("SSNN").

Layout, little-endian::

    b"SSNN" | version u16 | n_params u32 | parameter table
    has_optimizer u8 [| lr f64 | momentum f64 | epoch u32 | velocity table]

A table entry is ``name_len u16 | name utf-8 | ndim u8 | dims u32 x ndim |
float32 payload``.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError

MAGIC = b"SSNN"
VERSION = 1


class CheckpointError(DataError):
    pass


def _write_table(buf, arrays: dict[str, np.ndarray]):
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        buf.write(struct.pack("<H", len(raw)) + raw)
        buf.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())


def _read_exact(buf, n):
    data = buf.read(n)
    if len(data) != n:
        raise CheckpointError("truncated checkpoint")
    return data


def _read_table(buf) -> dict[str, np.ndarray]:
    (count,) = struct.unpack("<I", _read_exact(buf, 4))
    out = {}
    for _ in range(count):
        (n,) = struct.unpack("<H", _read_exact(buf, 2))
        name = _read_exact(buf, n).decode("utf-8")
        (ndim,) = struct.unpack("<B", _read_exact(buf, 1))
        dims = struct.unpack(f"<{ndim}I", _read_exact(buf, 4 * ndim))
        count_ = int(np.prod(dims)) if dims else 1
        out[name] = np.frombuffer(_read_exact(buf, 4 * count_), dtype="<f4").reshape(dims).copy()
    return out


def encode_checkpoint(params: dict[str, np.ndarray], optimizer=None) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC + struct.pack("<H", VERSION))
    _write_table(buf, params)
    if optimizer is None:
        buf.write(b"\x00")
    else:
        buf.write(b"\x01" + struct.pack("<ddI", optimizer.learning_rate, optimizer.momentum, optimizer.epoch))
        _write_table(buf, dict(sorted(optimizer.velocity.items())))
    return buf.getvalue()


def decode_checkpoint(blob: bytes):
    """Return ``(params, optimizer_fields)``; the latter is None when absent."""
    buf = io.BytesIO(blob)
    if _read_exact(buf, 4) != MAGIC:
        raise CheckpointError("not an SSNN checkpoint")
    (version,) = struct.unpack("<H", _read_exact(buf, 2))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    params = _read_table(buf)
    flag = buf.read(1)
    if flag in (b"", b"\x00"):
        return params, None
    lr, momentum, epoch = struct.unpack("<ddI", _read_exact(buf, 20))
    velocity = _read_table(buf)
    return params, {"learning_rate": lr, "momentum": momentum, "epoch": epoch, "velocity": velocity}


def save_checkpoint(path, params: dict[str, np.ndarray], optimizer=None) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(params, optimizer))
    tmp.replace(path)


def load_checkpoint(path):
    return decode_checkpoint(Path(path).read_bytes())
