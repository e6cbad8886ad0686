"""The .lwcm container: one graph plus named f32 tensors, readable in place.

Byte layout (all integers little-endian, unsigned):

    header   64 B   magic "LWCM", u16 version (1), u16 reserved (0),
                    u64 header_len (64), u64 graph_off (64), u64 graph_len,
                    u64 index_off, u64 index_len, u64 payload_off,
                    u64 payload_len
    graph           UTF-8 architecture text (see archfile)
    index           u64 entry count, then per tensor, sorted by name bytes:
                    u16 name_len, name bytes, u8 dtype (0 = f32), u16 rank,
                    rank x u64 dims, u64 offset (absolute), u64 length
    payload         raw f32 little-endian tensor data; every tensor starts on
                    a 64-byte boundary, gaps are zero padding
    trailer   4 B   u32 CRC-32 (zlib polynomial) over every byte before it

Sections are contiguous in the order above; the only gaps are the zeroed
alignment padding before the payload and between tensors. `deserialize`
copies tensors out; `open_inplace` hands back views over the source buffer
so a verified blob can be used without copying the payload.
"""

from __future__ import annotations

import struct
import zlib
from typing import BinaryIO, Mapping

import numpy as np

from .archfile import parse_arch, render_arch
from .graph import GraphError, ModelGraph, weight_specs
from .tensor import Tensor

__all__ = [
    "BadMagicError",
    "BlobError",
    "BoundsError",
    "ChecksumError",
    "DuplicateNameError",
    "ModelView",
    "SerializeError",
    "VersionError",
    "deserialize",
    "open_inplace",
    "serialize",
    "serialize_bytes",
    "text_dump",
    "text_load",
]

MAGIC = b"LWCM"
FORMAT_VERSION = 1
ALIGNMENT = 64

_HEADER = struct.Struct("<4sHH7Q")
_HEADER_LEN = _HEADER.size  # 64
_TRAILER = struct.Struct("<I")
_U64 = struct.Struct("<Q")


class BlobError(ValueError):
    """A byte sequence is not a usable model blob."""


class BadMagicError(BlobError):
    pass


class VersionError(BlobError):
    pass


class ChecksumError(BlobError):
    pass


class BoundsError(BlobError):
    """An offset, length, or section boundary falls outside the file."""


class DuplicateNameError(BlobError):
    pass


class SerializeError(BlobError):
    """The (graph, weights) pair cannot be written: missing or misshapen tensor."""


def _align(offset: int) -> int:
    return (offset + ALIGNMENT - 1) // ALIGNMENT * ALIGNMENT


def serialize_bytes(g: ModelGraph, weights: Mapping[str, Tensor]) -> bytes:
    """Deterministic blob for the graph and every tensor in the store."""
    for name, shape in weight_specs(g).items():
        t = weights.get(name)
        if t is None:
            raise SerializeError(f"missing weight tensor '{name}'")
        if t.shape != shape:
            raise SerializeError(
                f"weight tensor '{name}' has shape {t.shape}, expected {shape}"
            )

    names = sorted(weights, key=lambda n: n.encode("utf-8"))
    graph_bytes = render_arch(g).encode("utf-8")

    index = bytearray(_U64.pack(len(names)))
    entry_tail = []  # (name, tensor); offsets assigned after index size is known
    sizes: list[int] = []
    for name in names:
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise SerializeError(f"tensor name too long: {name!r}")
        t = weights[name]
        entry_tail.append((raw, t))
        sizes.append(4 * t.size)
    # index entry length is fixed per tensor once the name and rank are known
    index_len = len(index) + sum(
        2 + len(raw) + 1 + 2 + 8 * len(t.shape) + 16 for raw, t in entry_tail
    )
    payload_off = _align(_HEADER_LEN + len(graph_bytes) + index_len)

    offsets: list[int] = []
    cursor = payload_off
    for size in sizes:
        offsets.append(cursor)
        cursor = _align(cursor + size)
    payload_len = (offsets[-1] + sizes[-1] - payload_off) if sizes else 0

    for (raw, t), offset, size in zip(entry_tail, offsets, sizes):
        index += struct.pack("<H", len(raw)) + raw
        index += struct.pack("<BH", 0, len(t.shape))
        index += struct.pack(f"<{len(t.shape)}Q", *t.shape)
        index += struct.pack("<QQ", offset, size)
    assert len(index) == index_len

    blob = bytearray(
        _HEADER.pack(
            MAGIC, FORMAT_VERSION, 0, _HEADER_LEN, _HEADER_LEN, len(graph_bytes),
            _HEADER_LEN + len(graph_bytes), index_len, payload_off, payload_len,
        )
    )
    blob += graph_bytes
    blob += index
    blob += b"\x00" * (payload_off - len(blob))
    for (_, t), offset, size in zip(entry_tail, offsets, sizes):
        blob += b"\x00" * (offset - len(blob))
        blob += t.tobytes()
    blob += _TRAILER.pack(zlib.crc32(blob) & 0xFFFFFFFF)
    return bytes(blob)


def serialize(g: ModelGraph, weights: Mapping[str, Tensor], sink: BinaryIO) -> int:
    """Write the blob to a binary sink; nothing is written if validation fails."""
    blob = serialize_bytes(g, weights)
    sink.write(blob)
    return len(blob)


def _parse(source: bytes) -> tuple[ModelGraph, list[tuple[str, tuple[int, ...], int, int]]]:
    # Strict full validation: magic, version, checksum, then structure.
    if len(source) < _HEADER_LEN + _TRAILER.size:
        raise BoundsError(f"file too short to be a model blob ({len(source)} bytes)")
    magic = bytes(source[:4])
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (_, version, reserved, header_len, graph_off, graph_len,
     index_off, index_len, payload_off, payload_len) = _HEADER.unpack_from(source)
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported format version {version}")

    (stored_crc,) = _TRAILER.unpack_from(source, len(source) - 4)
    actual_crc = zlib.crc32(memoryview(source)[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise ChecksumError(f"checksum mismatch: stored {stored_crc:08x}, computed {actual_crc:08x}")

    if reserved != 0 or header_len != _HEADER_LEN or graph_off != _HEADER_LEN:
        raise BoundsError("malformed header")
    if index_off != graph_off + graph_len:
        raise BoundsError("graph and index sections must be contiguous")
    index_end = index_off + index_len
    if payload_off != _align(index_end) or payload_off % ALIGNMENT:
        raise BoundsError("payload must start at the first 64-byte boundary after the index")
    if payload_off + payload_len + _TRAILER.size != len(source):
        raise BoundsError("declared sections do not cover the file")
    if any(memoryview(source)[index_end:payload_off]):
        raise BoundsError("alignment padding must be zero")

    try:
        graph_text = bytes(source[graph_off:index_off]).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise BlobError(f"graph section is not UTF-8: {exc}") from None
    try:
        graph = parse_arch(graph_text)
    except GraphError as exc:
        raise BlobError(f"graph section: {exc}") from None

    cursor = index_off
    payload_end = payload_off + payload_len

    def take(fmt: struct.Struct | str, what: str):
        nonlocal cursor
        s = struct.Struct(fmt) if isinstance(fmt, str) else fmt
        if cursor + s.size > index_end:
            raise BoundsError(f"index truncated reading {what}")
        value = s.unpack_from(source, cursor)
        cursor += s.size
        return value

    (count,) = take(_U64, "entry count")
    entries: list[tuple[str, tuple[int, ...], int, int]] = []
    seen: set[str] = set()
    prev_key: bytes | None = None
    for i in range(count):
        (name_len,) = take("<H", f"entry {i} name length")
        if cursor + name_len > index_end:
            raise BoundsError(f"index truncated reading entry {i} name")
        raw = bytes(source[cursor:cursor + name_len])
        cursor += name_len
        try:
            name = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise BlobError(f"entry {i} name is not UTF-8") from None
        dtype, rank = take("<BH", f"entry {i} dtype/rank")
        if dtype != 0:
            raise BlobError(f"tensor '{name}': unsupported dtype code {dtype}")
        if rank < 1:
            raise BlobError(f"tensor '{name}': rank must be >= 1")
        dims = take(f"<{rank}Q", f"entry {i} dims")
        if any(d < 1 for d in dims):
            raise BlobError(f"tensor '{name}': dims must be >= 1, got {dims}")
        offset, length = take("<QQ", f"entry {i} offset/length")
        size = 4
        for d in dims:
            size *= d
        if length != size:
            raise BoundsError(f"tensor '{name}': length {length} != 4 x product{tuple(dims)}")
        if offset % ALIGNMENT:
            raise BlobError(f"tensor '{name}': offset {offset} is not 64-byte aligned")
        if offset < payload_off or offset + length > payload_end:
            raise BoundsError(f"tensor '{name}': data [{offset}, {offset + length}) outside payload")
        if name in seen:
            raise DuplicateNameError(f"duplicate tensor name '{name}'")
        seen.add(name)
        if prev_key is not None and raw <= prev_key:
            raise BlobError("index entries must be sorted by name bytes")
        prev_key = raw
        entries.append((name, tuple(int(d) for d in dims), offset, length))
    if cursor != index_end:
        raise BoundsError("index has trailing bytes")

    # payload must be exactly the declared tensors plus zeroed alignment gaps
    cursor = payload_off
    for name, _, offset, length in sorted(entries, key=lambda e: e[2]):
        if offset != cursor:
            raise BoundsError(f"tensor '{name}': expected at offset {cursor}, found {offset}")
        cursor = _align(offset + length)
    if entries:
        last = max(offset + length for _, _, offset, length in entries)
        if last - payload_off != payload_len:
            raise BoundsError("payload length does not match the last tensor")
        for _, _, offset, length in entries:
            pad_end = min(_align(offset + length), payload_end)
            if any(memoryview(source)[offset + length:pad_end]):
                raise BoundsError("payload padding must be zero")
    elif payload_len:
        raise BoundsError("payload bytes with an empty index")
    return graph, entries


def _view(source: bytes, shape: tuple[int, ...], offset: int, length: int) -> np.ndarray:
    flat = np.frombuffer(memoryview(source)[offset:offset + length], dtype="<f4")
    return flat.reshape(shape)


def deserialize(source: bytes) -> tuple[ModelGraph, dict[str, Tensor]]:
    """Parse and fully validate a blob, copying every tensor out of it."""
    graph, entries = _parse(source)
    store = {
        name: Tensor(_view(source, shape, offset, length).copy())
        for name, shape, offset, length in entries
    }
    return graph, store


class ModelView:
    """Verified handle over a resident blob; lookups are zero-copy views."""

    __slots__ = ("graph", "_source", "_entries", "_cache")

    def __init__(self, graph: ModelGraph, source: bytes,
                 entries: list[tuple[str, tuple[int, ...], int, int]]) -> None:
        self.graph = graph
        self._source = source
        self._entries = {name: (shape, offset, length) for name, shape, offset, length in entries}
        self._cache: dict[str, Tensor] = {}

    def names(self) -> tuple[str, ...]:
        return tuple(self._entries)

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __getitem__(self, name: str) -> Tensor:
        return self.lookup(name)

    def get(self, name: str, default: Tensor | None = None) -> Tensor | None:
        if name in self._entries:
            return self.lookup(name)
        return default

    def lookup(self, name: str) -> Tensor:
        cached = self._cache.get(name)
        if cached is not None:
            return cached
        try:
            shape, offset, length = self._entries[name]
        except KeyError:
            raise KeyError(f"no tensor named '{name}' in this model") from None
        t = Tensor(_view(self._source, shape, offset, length))
        self._cache[name] = t
        return t

    def items(self):
        for name in self._entries:
            yield name, self.lookup(name)

    def keys(self):
        return self._entries.keys()


def open_inplace(source: bytes) -> ModelView:
    """Validate once, then serve tensors as views over the payload region."""
    graph, entries = _parse(source)
    return ModelView(graph, source, entries)


def text_dump(g: ModelGraph, weights: Mapping[str, Tensor]) -> str:
    """Naive text container, the load-speed baseline for the binary format."""
    parts = [render_arch(g), "---\n"]
    for name in sorted(weights, key=lambda n: n.encode("utf-8")):
        t = weights[name]
        dims = " ".join(str(d) for d in t.shape)
        values = " ".join(repr(float(v)) for v in t.flat)
        parts.append(f"tensor {name} {len(t.shape)} {dims}\n{values}\n")
    return "".join(parts)


def text_load(text: str) -> tuple[ModelGraph, dict[str, Tensor]]:
    """Parse text_dump output the slow way, one float literal at a time."""
    arch_text, _, rest = text.partition("---\n")
    graph = parse_arch(arch_text)
    store: dict[str, Tensor] = {}
    lines = [line for line in rest.splitlines() if line.strip()]
    i = 0
    while i < len(lines):
        head = lines[i].split()
        if head[0] != "tensor" or len(head) < 3:
            raise ValueError(f"bad tensor header: {lines[i]!r}")
        name = head[1]
        rank = int(head[2])
        shape = tuple(int(d) for d in head[3:3 + rank])
        values = [float(v) for v in lines[i + 1].split()]
        arr = np.array(values, dtype=np.float32).reshape(shape)
        store[name] = Tensor(arr)
        i += 2
    return graph, store
