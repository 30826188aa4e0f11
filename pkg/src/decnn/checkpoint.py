"""DECK checkpoint format.

Layout (little-endian)::

    4s   magic b"DECK"
    u32  version (1)
    5u32 k, channels, in_slices, pre_layers, kernel
    u64  train step counter
    u32  parameter count P, then P records
    u8   1 if optimizer state follows
         u64 t, 4f64 lr, beta1, beta2, eps, then P first-moment and
         P second-moment records
    u32  metadata length, then that many bytes of UTF-8 JSON

A record is ``u16 name length, name, u8 ndim, ndim x u32 dims, f32 data``.
"""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError
from .model import DecnnModel, ModelConfig
from .optim import Adam

MAGIC = b"DECK"
VERSION = 1
_HEAD = struct.Struct("<4sI5IQI")
_ADAM = struct.Struct("<Q4d")


@dataclass
class Checkpoint:
    model: DecnnModel
    step: int = 0
    adam: dict | None = None
    meta: dict = field(default_factory=dict)


def _write_record(f, name: str, arr: np.ndarray) -> None:
    raw = name.encode()
    f.write(struct.pack("<H", len(raw)))
    f.write(raw)
    f.write(struct.pack("<B", arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, fmt: str):
        s = struct.Struct(fmt)
        if self.pos + s.size > len(self.buf):
            raise FormatError("truncated checkpoint", offset=len(self.buf))
        out = s.unpack_from(self.buf, self.pos)
        self.pos += s.size
        return out

    def bytes(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError("truncated checkpoint", offset=len(self.buf))
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def record(self) -> tuple[str, np.ndarray]:
        start = self.pos
        (n,) = self.take("<H")
        try:
            name = self.bytes(n).decode()
        except UnicodeDecodeError:
            raise FormatError("parameter name is not UTF-8", offset=start) from None
        (ndim,) = self.take("<B")
        dims = self.take(f"<{ndim}I")
        count = int(np.prod(dims)) if ndim else 1
        data = np.frombuffer(self.bytes(4 * count), dtype="<f4").reshape(dims)
        return name, data.astype(np.float32)


def save(path, model: DecnnModel, step: int = 0, adam: Adam | None = None, meta: dict | None = None) -> None:
    cfg = model.config
    params = model.parameters()
    f = io.BytesIO()
    f.write(_HEAD.pack(MAGIC, VERSION, cfg.k, cfg.channels, cfg.in_slices, cfg.pre_layers,
                       cfg.kernel, step, len(params)))
    for p in params:
        _write_record(f, p.name, p.value)
    if adam is None:
        f.write(b"\x00")
    else:
        f.write(b"\x01")
        f.write(_ADAM.pack(adam.t, adam.lr, adam.beta1, adam.beta2, adam.eps))
        for p in params:
            _write_record(f, p.name, adam.m[p.name])
        for p in params:
            _write_record(f, p.name, adam.v[p.name])
    blob = json.dumps(meta or {}, sort_keys=True).encode()
    f.write(struct.pack("<I", len(blob)))
    f.write(blob)
    # write-then-rename so an interrupted save never leaves a torn file
    tmp = Path(f"{path}.tmp")
    tmp.write_bytes(f.getvalue())
    os.replace(tmp, path)


def load(path) -> Checkpoint:
    r = _Reader(Path(path).read_bytes())
    magic, version, k, channels, in_slices, pre_layers, kernel, step, count = r.take(_HEAD.format)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    model = DecnnModel(ModelConfig(k, channels, in_slices, pre_layers, kernel))
    params = model.named_parameters()
    if count != len(params):
        raise FormatError(f"checkpoint has {count} parameters, config implies {len(params)}", offset=_HEAD.size - 4)
    for _ in range(count):
        at = r.pos
        name, data = r.record()
        if name not in params:
            raise FormatError(f"unknown parameter {name!r}", offset=at)
        if data.shape != params[name].value.shape:
            raise FormatError(f"{name}: shape {data.shape} != expected {params[name].value.shape}", offset=at)
        params[name].value[...] = data
    (flag,) = r.take("<B")
    adam = None
    if flag:
        t, lr, beta1, beta2, eps = r.take(_ADAM.format)
        m = dict(r.record() for _ in range(count))
        v = dict(r.record() for _ in range(count))
        adam = {"t": t, "lr": lr, "beta1": beta1, "beta2": beta2, "eps": eps, "m": m, "v": v}
    (n,) = r.take("<I")
    try:
        meta = json.loads(r.bytes(n).decode())
    except ValueError:
        raise FormatError("metadata is not valid JSON", offset=r.pos - n) from None
    if r.pos != len(r.buf):
        raise FormatError("trailing bytes after metadata", offset=r.pos)
    return Checkpoint(model, step, adam, meta)
