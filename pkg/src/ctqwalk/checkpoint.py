"""Binary parameter checkpoints.

Byte layout (all integers little-endian):

    magic   8 bytes  b"CTQWCKPT"
    version u32      currently 1
    count   u32      number of parameters
    then per parameter:
        name_len u16, name utf-8 bytes
        ndim     u8,  dims u32 * ndim
        data     float64 * prod(dims), row-major, little-endian
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ContractViolation

MAGIC = b"CTQWCKPT"
VERSION = 1


def save_params(path, named_params) -> None:
    named_params = list(named_params)
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(named_params)))
        for name, p in named_params:
            data = np.ascontiguousarray(p.data, dtype="<f8")
            raw = name.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(struct.pack("<B", data.ndim))
            f.write(struct.pack(f"<{data.ndim}I", *data.shape))
            f.write(data.tobytes())


def load_params(path) -> dict[str, np.ndarray]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != MAGIC:
        raise ContractViolation(f"{path} is not a parameter checkpoint")
    version, count = struct.unpack_from("<II", blob, 8)
    if version != VERSION:
        raise ContractViolation(f"unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    pos = 16
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=pos).reshape(shape)
        pos += 8 * n
        out[name] = arr.astype(np.float64).copy()
    if pos != len(blob):
        raise ContractViolation(f"trailing bytes in checkpoint {path}")
    return out
