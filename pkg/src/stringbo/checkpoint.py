"""Binary checkpoint files for regressor parameters.

Layout (little-endian)::

    b"ETRR" | u16 version | u32 config_len | config JSON (UTF-8)
    u32 tensor_count
    per tensor: u16 name_len | name | u8 ndim | u32 dims[ndim] | f32 data

Tensors are stored as 32-bit floats.  :func:`round_params` applies the same
rounding in memory so a model predicts identically before and after a
save/load cycle.
"""

from __future__ import annotations

import io
import json
import os
import struct

import numpy as np

from .regressor import Regressor, RegressorConfig, param_shapes

MAGIC = b"ETRR"
VERSION = 1


class CheckpointError(ValueError):
    pass


def round_params(params: dict) -> dict:
    return {k: np.asarray(v, dtype=np.float32).astype(np.float64) for k, v in params.items()}


def dumps(params: dict, config: RegressorConfig) -> bytes:
    buf = io.BytesIO()
    blob = json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<HI", VERSION, len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(params)))
    for name in param_shapes(config):
        arr = np.ascontiguousarray(params[name], dtype="<f4")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def save_checkpoint(params: dict, config: RegressorConfig, path) -> None:
    """Write atomically: a partial file never replaces a good one."""
    data = dumps(params, config)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        end = self.pos + n
        if end > len(self.data):
            raise CheckpointError(
                f"truncated checkpoint: reading {what} needs {end} bytes, file has {len(self.data)}"
            )
        out = self.data[self.pos:end]
        self.pos = end
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads(data: bytes) -> tuple[dict, RegressorConfig]:
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (version,) = r.unpack("<H", "version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (this build reads version {VERSION})")
    (blob_len,) = r.unpack("<I", "config length")
    try:
        config = RegressorConfig(**json.loads(r.take(blob_len, "config").decode("utf-8")))
    except (TypeError, ValueError) as exc:
        raise CheckpointError(f"invalid config block: {exc}") from None
    expected = param_shapes(config)
    (count,) = r.unpack("<I", "tensor count")
    params = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H", "name length")
        name = r.take(name_len, "tensor name").decode("utf-8")
        (ndim,) = r.unpack("<B", f"{name} rank")
        shape = r.unpack(f"<{ndim}I", f"{name} shape")
        size = int(np.prod(shape, dtype=np.int64))
        raw = r.take(4 * size, f"{name} data")
        if name not in expected:
            raise CheckpointError(f"unexpected tensor {name!r}")
        if tuple(shape) != expected[name]:
            raise CheckpointError(f"{name}: stored shape {tuple(shape)} != configured {expected[name]}")
        params[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
    missing = sorted(set(expected) - set(params))
    if missing:
        raise CheckpointError(f"checkpoint lacks tensors: {missing}")
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after last tensor")
    return params, config


def load_checkpoint(path) -> tuple[dict, RegressorConfig]:
    with open(path, "rb") as fh:
        return loads(fh.read())


def load_regressor(path) -> Regressor:
    params, config = load_checkpoint(path)
    return Regressor(params, config)
