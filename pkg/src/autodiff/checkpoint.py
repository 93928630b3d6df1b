"""MRCK parameter checkpoints.

Layout (little-endian): ``b"MRCK"``, u8 version, u32 count, then per parameter
u16 name length, UTF-8 name, u8 rank, u32 dims..., f32 data. A trailer of
u32 length + UTF-8 JSON carries the model config.
"""
from __future__ import annotations

import json
import logging
import os
import struct
from typing import Any, Dict, Tuple

import numpy as np

from src.core.errors import CheckpointError, DataError, FormatError, PayloadLengthError

from .nn import Module

MAGIC = b"MRCK"
VERSION = 1

log = logging.getLogger("checkpoint")


def save_checkpoint(path: str, model: Module, config: Dict[str, Any]) -> None:
    parts = [MAGIC, struct.pack("<BI", VERSION, 0)]
    count = 0
    for name, param in model.named_parameters():
        encoded = name.encode("utf-8")
        data = np.ascontiguousarray(param.data, dtype="<f4")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", data.ndim))
        parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
        parts.append(data.tobytes())
        count += 1
    parts[1] = struct.pack("<BI", VERSION, count)
    trailer = json.dumps(config, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(trailer)))
    parts.append(trailer)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(b"".join(parts))
    os.replace(tmp, path)
    log.debug("Wrote checkpoint %s (%d parameters)", path, count)


class _Reader:
    def __init__(self, path: str, blob: bytes) -> None:
        self.path = path
        self.blob = blob
        self.offset = 0

    def take(self, n: int) -> bytes:
        end = self.offset + n
        if end > len(self.blob):
            raise PayloadLengthError(self.path, end, len(self.blob))
        chunk = self.blob[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str) -> Tuple[Any, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_checkpoint(path: str) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    try:
        with open(path, "rb") as f:
            reader = _Reader(path, f.read())
    except FileNotFoundError as exc:
        raise DataError(f"Checkpoint not found: {path}") from exc
    if reader.take(4) != MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic", 0)
    (version,) = reader.unpack("<B")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (count,) = reader.unpack("<I")
    state: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<B")
        dims = reader.unpack(f"<{rank}I") if rank else ()
        size = int(np.prod(dims)) if rank else 1
        values = np.frombuffer(reader.take(4 * size), dtype="<f4").reshape(dims)
        state[name] = values.astype(np.float32)
    (trailer_len,) = reader.unpack("<I")
    config = json.loads(reader.take(trailer_len).decode("utf-8"))
    return state, config


def load_checkpoint(path: str, model: Module, expected_config: Dict[str, Any]) -> None:
    state, config = read_checkpoint(path)
    expected = json.loads(json.dumps(expected_config, sort_keys=True))
    if config != expected:
        diff = sorted(k for k in set(config) | set(expected) if config.get(k) != expected.get(k))
        raise CheckpointError(f"{path}: model config mismatch on {diff}")
    own = dict(model.named_parameters())
    for name, values in state.items():
        if name in own and own[name].shape != values.shape:
            raise CheckpointError(
                f"{path}: shape mismatch for {name}: {values.shape} vs {own[name].shape}"
            )
    try:
        model.load_state_dict(state)
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
