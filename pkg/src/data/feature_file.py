"""MRFF feature files.

Header (20 bytes, little-endian): ``b"MRFF"``, u8 version = 1, u8 dtype = 0
(f32), u16 reserved = 0, u32 T, u32 D, f32 stride_seconds; then T*D f32
values, time-major.
"""
from __future__ import annotations

import os
import struct
from typing import Tuple

import numpy as np

from src.core.errors import DataError, FormatError, PayloadLengthError, ValidationError

MAGIC = b"MRFF"
VERSION = 1
DTYPE_F32 = 0
HEADER = struct.Struct("<4sBBHIIf")


def write_feature_file(path: str, features: np.ndarray, stride_seconds: float) -> None:
    """Write a time-major [T, D] array."""
    features = np.asarray(features)
    if features.ndim != 2:
        raise ValidationError(f"Feature array must be [T, D], got shape {features.shape}")
    if not stride_seconds > 0:
        raise ValidationError(f"stride_seconds must be positive, got {stride_seconds}")
    t, d = features.shape
    payload = np.ascontiguousarray(features, dtype="<f4").tobytes()
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, DTYPE_F32, 0, t, d, stride_seconds))
        f.write(payload)


def read_feature_file(path: str) -> Tuple[np.ndarray, float]:
    """Return channel-major features [D, T] and the stride in seconds."""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except FileNotFoundError as exc:
        raise DataError(f"Feature file not found: {path}") from exc
    if len(blob) < HEADER.size:
        raise PayloadLengthError(path, HEADER.size, len(blob))
    magic, version, dtype, _reserved, t, d, stride = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}", 4)
    if dtype != DTYPE_F32:
        raise FormatError(f"{path}: unsupported dtype code {dtype}", 5)
    if not stride > 0:
        raise FormatError(f"{path}: stride_seconds must be positive, got {stride}", 16)
    expected = HEADER.size + 4 * t * d
    if len(blob) != expected:
        raise PayloadLengthError(path, expected, len(blob))
    values = np.frombuffer(blob, dtype="<f4", offset=HEADER.size, count=t * d)
    return values.reshape(t, d).T.astype(np.float32), float(stride)
