"""Dense float32 tensors and the deterministic generator behind reproducible weights.

Tensors are immutable by convention: no operation in this package writes to an
input tensor, and every constructor validates dimensions and finiteness. Data
is stored row-major (C order) with the channel axis fastest for images.

Random values come from SplitMix64 so that a given seed produces the same
stream on every platform, independent of any library RNG.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

__all__ = [
    "Prng",
    "ShapeError",
    "Tensor",
    "fnv1a64",
    "from_data",
    "seeded_uniform",
    "zeros",
]

_MASK64 = (1 << 64) - 1

# SplitMix64 constants (Steele, Lea, Flood 2014).
_SM64_INCREMENT = 0x9E3779B97F4A7C15
_SM64_MULT1 = 0xBF58476D1CE4E5B9
_SM64_MULT2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


class ShapeError(ValueError):
    """A tensor or operator shape constraint was violated."""


def _check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in shape)
    if not dims:
        raise ShapeError("shape must have at least one dimension")
    if any(d < 1 for d in dims):
        raise ShapeError(f"all dimensions must be >= 1, got {dims}")
    return dims


class Tensor:
    """A dense float32 array with an explicit shape.

    Wraps a C-contiguous numpy array. Construction validates that every
    dimension is at least 1 and that all values are finite; operations that
    return tensors therefore cannot silently produce NaN or infinity.
    """

    __slots__ = ("shape", "data")

    def __init__(self, array) -> None:
        arr = np.asarray(array, dtype=np.float32)
        if arr.ndim == 0:
            raise ShapeError("tensor must have at least one dimension")
        arr = np.ascontiguousarray(arr)
        if any(d < 1 for d in arr.shape):
            raise ShapeError(f"all dimensions must be >= 1, got {tuple(arr.shape)}")
        if not np.isfinite(arr).all():
            raise ValueError("tensor values must be finite")
        self.shape: tuple[int, ...] = tuple(int(d) for d in arr.shape)
        self.data: np.ndarray = arr

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def tolist(self) -> list[float]:
        return self.flat.tolist()

    def tobytes(self) -> bytes:
        """Raw little-endian float32 payload, row-major."""
        return self.data.astype("<f4", copy=False).tobytes()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def zeros(shape: Sequence[int]) -> Tensor:
    """An all-zero tensor of the given shape."""
    return Tensor(np.zeros(_check_shape(shape), dtype=np.float32))


def from_data(shape: Sequence[int], values) -> Tensor:
    """Build a tensor from a flat sequence of numbers in row-major order."""
    dims = _check_shape(shape)
    arr = np.asarray(values, dtype=np.float32).reshape(-1)
    want = int(np.prod(dims))
    if arr.size != want:
        raise ShapeError(f"shape {dims} needs {want} values, got {arr.size}")
    return Tensor(arr.reshape(dims))


class Prng:
    """SplitMix64 stream: 64-bit state, one mixed output per step."""

    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _SM64_INCREMENT) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _SM64_MULT1) & _MASK64
        z = ((z ^ (z >> 27)) * _SM64_MULT2) & _MASK64
        return z ^ (z >> 31)

    def uniform(self, lo: float, hi: float) -> float:
        """Next value mapped into [lo, hi) by dividing the raw output by 2**64."""
        return lo + (hi - lo) * (self.next_u64() / 2.0**64)

    def randrange(self, n: int) -> int:
        return self.next_u64() % n

    def choice(self, seq):
        return seq[self.randrange(len(seq))]


def _splitmix64_block(seed: int, count: int) -> np.ndarray:
    # Output i of SplitMix64 is mix(seed + i * increment), so a whole block
    # can be produced without stepping state sequentially.
    steps = np.arange(1, count + 1, dtype=np.uint64)
    state = np.uint64(seed & _MASK64) + steps * np.uint64(_SM64_INCREMENT)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_SM64_MULT1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_SM64_MULT2)
    return z ^ (z >> np.uint64(31))


def seeded_uniform(shape: Sequence[int], seed: int, lo: float = -0.05, hi: float = 0.05) -> Tensor:
    """Deterministic uniform tensor over [lo, hi).

    Element i comes from SplitMix64 output i + 1 for the given seed, divided
    by 2**64 and scaled. Identical arguments give bitwise-identical tensors.
    """
    dims = _check_shape(shape)
    lo = float(lo)
    hi = float(hi)
    if not lo < hi:
        raise ValueError(f"lo must be strictly less than hi, got [{lo}, {hi})")
    count = int(np.prod(dims))
    raw = _splitmix64_block(seed, count)
    unit = raw.astype(np.float64) / 2.0**64
    vals = (lo + (hi - lo) * unit).astype(np.float32)
    # the float32 cast can round up to hi exactly; clamp to keep [lo, hi) true
    vals = np.minimum(vals, np.nextafter(np.float32(hi), np.float32(lo)))
    return Tensor(vals.reshape(dims))


def fnv1a64(data: bytes | str) -> int:
    """FNV-1a 64-bit hash; stable across runs, used to derive per-name seeds."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h
