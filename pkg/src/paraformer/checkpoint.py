"""CPKT checkpoint files.

Layout (little endian)::

    "CPKT" | u32 version | u32 json_len | run-config JSON (UTF-8)
    then per parameter, in canonical order:
    u32 name_len | name (UTF-8) | u32 rank | rank x u32 dims | float32 values
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import BadMagicError, SizeMismatchError, TruncatedFileError, UnsupportedVersionError
from .tensor import Tensor

MAGIC = b"CPKT"
VERSION = 1
_HEAD = struct.Struct("<4sII")
_U32 = struct.Struct("<I")


def write_checkpoint(path, config: RunConfig, params: dict) -> None:
    blob = json.dumps(config.to_dict()).encode("utf-8")
    parts = [_HEAD.pack(MAGIC, VERSION, len(blob)), blob]
    for name, p in params.items():
        data = p.data if isinstance(p, Tensor) else np.asarray(p)
        encoded = name.encode("utf-8")
        parts.append(_U32.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_U32.pack(data.ndim))
        parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
        parts.append(np.ascontiguousarray(data, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw, self.pos, self.path = raw, 0, path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.raw):
            raise TruncatedFileError(f"{self.path}: truncated while reading {what}")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]


def read_checkpoint(path) -> tuple[RunConfig, dict]:
    """Return (config, params) with parameters widened back to float64."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    r = _Reader(raw, path)
    _, version, json_len = _HEAD.unpack(r.take(_HEAD.size, "header"))
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported checkpoint version {version}")
    try:
        doc = json.loads(r.take(json_len, "config").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SizeMismatchError(f"{path}: config block is not valid JSON ({exc})") from None
    config = RunConfig.from_dict(doc)
    params = {}
    while r.pos < len(raw):
        name = r.take(r.u32("name length"), "name").decode("utf-8")
        rank = r.u32("rank")
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank, "dims"))
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        values = np.frombuffer(r.take(4 * count, f"values of {name}"), dtype="<f4")
        params[name] = Tensor(values.reshape(dims).astype(np.float64), requires_grad=True)
    return config, params


def round_to_storage(params: dict) -> dict:
    """Parameters as they would come back from a checkpoint."""
    return {k: Tensor(p.data.astype(np.float32).astype(np.float64), requires_grad=True)
            for k, p in params.items()}
