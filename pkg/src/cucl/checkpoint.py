"""Binary container for named float64 arrays.

Layout (little-endian)::

    b"CUCLCKPT"  u32 version  u32 count
    count x { u16 name_len, name (utf-8), u8 ndim, ndim x u32 extent }
    payload: every array's values as float64, row-major, in header order
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"CUCLCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_arrays(path, arrays: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    header = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    payload = []
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8")  # ascontiguousarray would turn 0-d into 1-d
        raw = name.encode()
        header.append(struct.pack("<H", len(raw)) + raw)
        header.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        payload.append(arr.tobytes())
    path.write_bytes(b"".join(header + payload))
    return path


def load_arrays(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    try:
        version, count = struct.unpack_from("<II", buf, 8)
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        pos = 16
        specs = []
        for _ in range(count):
            (n,) = struct.unpack_from("<H", buf, pos)
            name = buf[pos + 2:pos + 2 + n].decode()
            pos += 2 + n
            (ndim,) = struct.unpack_from("<B", buf, pos)
            shape = struct.unpack_from(f"<{ndim}I", buf, pos + 1)
            pos += 1 + 4 * ndim
            specs.append((name, shape))
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated header ({exc})") from None
    out = {}
    for name, shape in specs:
        size = int(np.prod(shape)) if shape else 1
        end = pos + 8 * size
        if end > len(buf):
            raise CheckpointError(f"{path}: truncated payload for {name!r}")
        out[name] = np.frombuffer(buf[pos:end], dtype="<f8").reshape(shape).astype(np.float64)
        pos = end
    if pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - pos} trailing bytes")
    return out
