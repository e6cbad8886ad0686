"""Bit-exact image and tensor file IO: binary PNM and the .lwt raw format.

Only maxval-255 binary PNM (P5 grayscale, P6 RGB) is accepted; compressed
codecs are out of scope. The .lwt raw tensor file is magic "LWT1", u16 rank,
rank x u64 little-endian dims, then the f32 payload, nothing after it.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

from .tensor import ShapeError, Tensor

__all__ = [
    "PnmDepthError",
    "PnmError",
    "PnmFormatError",
    "PnmTruncatedError",
    "RawTensorError",
    "pnm_bytes",
    "raw_bytes",
    "read_pnm",
    "read_raw",
    "write_pnm",
    "write_raw",
]

RAW_MAGIC = b"LWT1"

_WHITESPACE = b" \t\n\r\x0b\x0c"


class PnmError(ValueError):
    """Base for PNM decode failures."""


class PnmFormatError(PnmError):
    """Not a binary P5/P6 file, or the header is malformed."""


class PnmDepthError(PnmError):
    """Sample depth other than maxval 255."""


class PnmTruncatedError(PnmError):
    """The header or pixel payload ends early."""


class RawTensorError(ValueError):
    """A byte sequence is not a usable .lwt tensor file."""


def _header_token(data: bytes, pos: int) -> tuple[int, int]:
    # one whitespace-delimited integer, skipping comments (# to end of line)
    while True:
        while pos < len(data) and data[pos] in _WHITESPACE:
            pos += 1
        if pos < len(data) and data[pos] == 0x23:  # '#'
            while pos < len(data) and data[pos] not in b"\r\n":
                pos += 1
            continue
        break
    start = pos
    while pos < len(data) and data[pos] not in _WHITESPACE:
        pos += 1
    token = data[start:pos]
    if not token:
        raise PnmTruncatedError("header ends before all fields are present")
    if not token.isdigit():
        raise PnmFormatError(f"expected an integer header field, got {token!r}")
    return int(token), pos


def read_pnm(data: bytes) -> Tensor:
    """Decode binary PNM bytes to an HxWx1 (P5) or HxWx3 (P6) tensor of 0..255."""
    if len(data) < 2:
        raise PnmTruncatedError("file too short for a PNM magic")
    magic = data[:2]
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    elif magic in (b"P1", b"P2", b"P3", b"P4", b"P7"):
        raise PnmFormatError(f"unsupported PNM type {magic.decode('ascii')}; only binary P5/P6")
    else:
        raise PnmFormatError(f"not a PNM file (magic {magic!r})")

    width, pos = _header_token(data, 2)
    height, pos = _header_token(data, pos)
    maxval, pos = _header_token(data, pos)
    if width < 1 or height < 1:
        raise PnmFormatError(f"image dimensions must be positive, got {width}x{height}")
    if maxval != 255:
        raise PnmDepthError(f"only maxval 255 is supported, got {maxval}")
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise PnmFormatError("maxval must be followed by a single whitespace byte")
    pos += 1

    count = width * height * channels
    if len(data) - pos < count:
        raise PnmTruncatedError(
            f"payload needs {count} bytes, only {len(data) - pos} present"
        )
    pixels = np.frombuffer(data, dtype=np.uint8, count=count, offset=pos)
    return Tensor(pixels.reshape(height, width, channels).astype(np.float32))


def pnm_bytes(t: Tensor) -> bytes:
    """Encode an HxWx1 or HxWx3 tensor as binary PNM, clamping and rounding to 0..255."""
    if len(t.shape) != 3 or t.shape[2] not in (1, 3):
        raise ShapeError(f"PNM needs an HxWx1 or HxWx3 tensor, got {t.shape}")
    h, w, c = t.shape
    magic = b"P5" if c == 1 else b"P6"
    samples = np.floor(np.clip(t.data.astype(np.float64), 0.0, 255.0) + 0.5)
    header = magic + b"\n%d %d\n255\n" % (w, h)
    return header + samples.astype(np.uint8).tobytes()


def write_pnm(t: Tensor, sink: BinaryIO) -> int:
    encoded = pnm_bytes(t)
    sink.write(encoded)
    return len(encoded)


def raw_bytes(t: Tensor) -> bytes:
    rank = len(t.shape)
    return (
        RAW_MAGIC
        + struct.pack("<H", rank)
        + struct.pack(f"<{rank}Q", *t.shape)
        + t.tobytes()
    )


def write_raw(t: Tensor, sink: BinaryIO) -> int:
    encoded = raw_bytes(t)
    sink.write(encoded)
    return len(encoded)


def read_raw(data: bytes) -> Tensor:
    """Decode a .lwt file; bitwise inverse of write_raw."""
    if len(data) < 6:
        raise RawTensorError("file too short for a raw tensor header")
    if data[:4] != RAW_MAGIC:
        raise RawTensorError(f"bad magic {bytes(data[:4])!r}, expected {RAW_MAGIC!r}")
    (rank,) = struct.unpack_from("<H", data, 4)
    if rank < 1:
        raise RawTensorError("rank must be >= 1")
    dims_end = 6 + 8 * rank
    if len(data) < dims_end:
        raise RawTensorError("file ends inside the dims list")
    dims = struct.unpack_from(f"<{rank}Q", data, 6)
    if any(d < 1 for d in dims):
        raise RawTensorError(f"dims must be >= 1, got {dims}")
    count = 1
    for d in dims:
        count *= d
    end = dims_end + 4 * count
    if len(data) < end:
        raise RawTensorError(f"payload needs {4 * count} bytes, only {len(data) - dims_end} present")
    if len(data) > end:
        raise RawTensorError(f"{len(data) - end} trailing bytes after the payload")
    flat = np.frombuffer(data, dtype="<f4", count=count, offset=dims_end)
    return Tensor(flat.reshape(dims).copy())
