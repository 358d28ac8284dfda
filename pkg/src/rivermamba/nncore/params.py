"""Named parameter storage and its binary file format.

File layout (little-endian)::

    b"RSNN"  u32 version  u32 count
    repeated count times:
        u16 name_len  name (utf-8)  u8 rank  u32 dims[rank]  f64 payload[prod(dims)]
"""

from __future__ import annotations

import io
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .tensor import Tensor

MAGIC = b"RSNN"
VERSION = 1


class ParamStore:
    """Ordered mapping of unique names to trainable tensors plus optimizer state."""

    def __init__(self):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        self.state: dict[str, dict] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name) -> Tensor:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def names(self):
        return list(self._params)

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None

    def num_values(self) -> int:
        return sum(p.size for p in self._params.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self._params.items()}

    def load_snapshot(self, snap):
        for k, v in snap.items():
            p = self._params[k]
            if p.shape != v.shape:
                raise ValueError(f"shape mismatch for {k}: {p.shape} vs {v.shape}")
            p.data = np.array(v, dtype=np.float64)

    # serialisation ------------------------------------------------------------------

    def to_bytes(self) -> bytes:
        return encode_tensors([(k, p.data) for k, p in self._params.items()], header=True)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ParamStore":
        store = cls()
        for name, arr in decode_tensors(blob, header=True):
            store.add(name, arr)
        return store

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ParamStore":
        return cls.from_bytes(Path(path).read_bytes())


def write_tensor(buf, name: str, arr):
    arr = np.asarray(arr, dtype="<f8")
    raw = name.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError("tensor name too long")
    if arr.ndim > 0xFF:
        raise ValueError("tensor rank too large")
    buf.write(struct.pack("<H", len(raw)))
    buf.write(raw)
    buf.write(struct.pack("<B", arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    buf.write(np.ascontiguousarray(arr).tobytes())


def read_tensor(buf):
    name = _read(buf, struct.unpack("<H", _read(buf, 2))[0]).decode("utf-8")
    rank = struct.unpack("<B", _read(buf, 1))[0]
    dims = struct.unpack(f"<{rank}I", _read(buf, 4 * rank))
    count = int(np.prod(dims)) if rank else 1
    payload = _read(buf, 8 * count)
    return name, np.frombuffer(payload, dtype="<f8").reshape(dims).astype(np.float64)


def _read(buf, n):
    data = buf.read(n)
    if len(data) != n:
        raise ValueError("truncated tensor file")
    return data


def encode_tensors(items, header: bool = True) -> bytes:
    buf = io.BytesIO()
    items = list(items)
    if header:
        buf.write(MAGIC)
        buf.write(struct.pack("<II", VERSION, len(items)))
    else:
        buf.write(struct.pack("<I", len(items)))
    for name, arr in items:
        write_tensor(buf, name, arr)
    return buf.getvalue()


def decode_tensors(blob, header: bool = True):
    buf = io.BytesIO(blob) if isinstance(blob, (bytes, bytearray)) else blob
    if header:
        magic = buf.read(4)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version, count = struct.unpack("<II", _read(buf, 8))
        if version != VERSION:
            raise ValueError(f"unsupported parameter file version {version}")
    else:
        (count,) = struct.unpack("<I", _read(buf, 4))
    return [read_tensor(buf) for _ in range(count)]
