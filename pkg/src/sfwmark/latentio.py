"""Binary latent container.

Layout: 8-byte magic ``SFWLAT1\\0``, three little-endian uint32 dims ``C, H, W``,
four reserved zero bytes (so the header is 24 bytes and the values are 8-byte
aligned), then ``C*H*W`` little-endian float64 values in channel-major,
row-major order.
"""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"SFWLAT1\0"
_HEADER = struct.Struct("<8s3I4x")
HEADER_SIZE = _HEADER.size  # 24


class LatentFormatError(ValueError):
    pass


def encode_latent(latent) -> bytes:
    z = np.asarray(latent, dtype=np.float64)
    if z.ndim != 3:
        raise ValueError(f"latent must be 3-D (C, H, W), got shape {z.shape}")
    return _HEADER.pack(MAGIC, *z.shape) + z.astype("<f8").tobytes(order="C")


def decode_latent(data: bytes) -> np.ndarray:
    if len(data) < HEADER_SIZE:
        raise LatentFormatError("file shorter than the 24-byte header")
    magic, c, h, w = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise LatentFormatError("bad magic; not a latent file")
    if any(data[HEADER_SIZE - 4:HEADER_SIZE]):
        raise LatentFormatError("reserved header bytes must be zero")
    expected = HEADER_SIZE + 8 * c * h * w
    if len(data) != expected:
        raise LatentFormatError(f"expected {expected} bytes for a {c}x{h}x{w} latent, got {len(data)}")
    return np.frombuffer(data, dtype="<f8", offset=HEADER_SIZE).reshape(c, h, w).astype(np.float64)


def write_latent(path, latent) -> None:
    with open(path, "wb") as f:
        f.write(encode_latent(latent))


def read_latent(path) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_latent(f.read())
