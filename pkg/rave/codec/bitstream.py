"""RAVS container: header, packed attribute planes, entropy-coded payload.

Header layout (little-endian):

    magic "RAVS" | version u16 | flags u16 | canvas_width u32 |
    canvas_height u32 | gaussian_count u32 | anchor_level u8 |
    plane_count u8 | plane_count x (bits u8, min f32, max f32) |
    payload_raw_len u64 | payload_compressed_len u64 | header CRC-32 u32

Flags: bit 0 payload compressed, bit 1 checkpoint, bits 2-3 backend id.
Codes of each plane are packed MSB-first at `bits` bits per value and padded
to a byte boundary; planes follow each other in `PLANE_NAMES` order.
"""

from __future__ import annotations

import hashlib
import logging
import struct
import threading
import zlib
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from pydantic import ValidationError

from ..exceptions import (
    BadMagicError,
    CorruptPayloadError,
    CrcMismatchError,
    EmptySelectionError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)
from ..models.quant import PLANE_NAMES, QuantPlane, QuantSpec
from ..splat.gaussians import GaussianSet, as_index_array
from .backends import DEFAULT_BACKEND, EntropyBackend, backend_for_id
from .quant import dequantize_array, fit_spec, quantize_planes

logger = logging.getLogger(__name__)

MAGIC = b"RAVS"
VERSION = 1

FLAG_COMPRESSED = 0x1
FLAG_CHECKPOINT = 0x2
BACKEND_SHIFT = 2
BACKEND_MASK = 0x3 << BACKEND_SHIFT

ANCHOR_INTERPOLATED = 255
# header bits value marking a raw float32 plane (checkpoints only)
RAW_F32_BITS = 32

_HEAD = struct.Struct("<4sHHIIIBB")
_PLANE = struct.Struct("<Bff")
_TAIL = struct.Struct("<QQ")
_CRC = struct.Struct("<I")

HEADER_SIZE = _HEAD.size + len(PLANE_NAMES) * _PLANE.size + _TAIL.size + _CRC.size


@dataclass(frozen=True)
class ContainerHeader:
    flags: int
    canvas_width: int
    canvas_height: int
    gaussian_count: int
    anchor_level: int
    planes: tuple[tuple[int, float, float], ...]
    payload_raw_len: int
    payload_compressed_len: int

    @property
    def compressed(self) -> bool:
        return bool(self.flags & FLAG_COMPRESSED)

    @property
    def checkpoint(self) -> bool:
        return bool(self.flags & FLAG_CHECKPOINT)

    @property
    def backend_id(self) -> int:
        return (self.flags & BACKEND_MASK) >> BACKEND_SHIFT

    def quant_spec(self) -> QuantSpec:
        try:
            return QuantSpec(
                planes={
                    name: QuantPlane(bits=bits, min=lo, max=hi)
                    for name, (bits, lo, hi) in zip(PLANE_NAMES, self.planes)
                }
            )
        except ValidationError as err:
            raise CorruptPayloadError(
                f"header holds an invalid quantization grid: {err}"
            ) from err


def pack_codes(codes: np.ndarray, bits: int) -> bytes:
    if bits == 0 or codes.size == 0:
        return b""
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint32)
    matrix = (codes.astype(np.uint32)[:, None] >> shifts[None, :]) & 1
    return np.packbits(matrix.astype(np.uint8).ravel()).tobytes()


def packed_size(count: int, bits: int) -> int:
    return (count * bits + 7) // 8


def unpack_codes(data: bytes, count: int, bits: int) -> np.ndarray:
    if bits == 0 or count == 0:
        return np.zeros(count, dtype=np.uint16)
    flat = np.unpackbits(np.frombuffer(data, dtype=np.uint8))[: count * bits]
    weights = (1 << np.arange(bits - 1, -1, -1, dtype=np.uint32)).astype(np.uint32)
    return (flat.reshape(count, bits).astype(np.uint32) @ weights).astype(np.uint16)


def write_container(
    *,
    flags: int,
    canvas_width: int,
    canvas_height: int,
    gaussian_count: int,
    anchor_level: int,
    planes: list[tuple[int, float, float]],
    raw_payload: bytes,
    backend: Optional[EntropyBackend],
) -> bytes:
    if backend is not None:
        flags |= FLAG_COMPRESSED | (backend.backend_id << BACKEND_SHIFT)
        payload = backend.compress(raw_payload)
    else:
        flags &= ~(FLAG_COMPRESSED | BACKEND_MASK)
        payload = raw_payload
    header = bytearray(
        _HEAD.pack(
            MAGIC,
            VERSION,
            flags,
            canvas_width,
            canvas_height,
            gaussian_count,
            anchor_level,
            len(planes),
        )
    )
    for bits, lo, hi in planes:
        header += _PLANE.pack(bits, lo, hi)
    header += _TAIL.pack(len(raw_payload), len(payload))
    header += _CRC.pack(zlib.crc32(bytes(header)) & 0xFFFFFFFF)
    return bytes(header) + payload


def read_container(data: bytes) -> tuple[ContainerHeader, bytes]:
    """Validate a container and return its header and decompressed payload."""
    if len(data) < len(MAGIC):
        raise TruncatedPayloadError("stream is shorter than the magic")
    if data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < 6:
        raise TruncatedPayloadError("stream ends inside the header")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != VERSION:
        raise UnsupportedVersionError(f"container version {version} is not supported")
    if len(data) < HEADER_SIZE:
        raise TruncatedPayloadError(
            f"stream has {len(data)} bytes, header needs {HEADER_SIZE}"
        )
    crc_offset = HEADER_SIZE - _CRC.size
    (stored_crc,) = _CRC.unpack_from(data, crc_offset)
    actual_crc = zlib.crc32(data[:crc_offset]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise CrcMismatchError(
            f"header CRC mismatch (stored {stored_crc:08x}, computed {actual_crc:08x})"
        )

    _, _, flags, width, height, count, level, plane_count = _HEAD.unpack_from(data, 0)
    if plane_count != len(PLANE_NAMES):
        raise CorruptPayloadError(
            f"expected {len(PLANE_NAMES)} planes, got {plane_count}"
        )
    planes = tuple(
        _PLANE.unpack_from(data, _HEAD.size + i * _PLANE.size)
        for i in range(plane_count)
    )
    raw_len, compressed_len = _TAIL.unpack_from(
        data, _HEAD.size + plane_count * _PLANE.size
    )
    header = ContainerHeader(
        flags=flags,
        canvas_width=width,
        canvas_height=height,
        gaussian_count=count,
        anchor_level=level,
        planes=planes,
        payload_raw_len=raw_len,
        payload_compressed_len=compressed_len,
    )

    body = data[HEADER_SIZE : HEADER_SIZE + compressed_len]
    if len(body) < compressed_len:
        raise TruncatedPayloadError(
            f"payload has {len(body)} bytes, header announces {compressed_len}"
        )
    if header.compressed:
        raw = backend_for_id(header.backend_id).decompress(body)
    else:
        raw = body
    if len(raw) != raw_len:
        raise CorruptPayloadError(
            f"payload decodes to {len(raw)} bytes, header announces {raw_len}"
        )
    return header, raw


@dataclass(frozen=True)
class DecodedStream:
    gaussians: GaussianSet
    anchor_level: int
    quant_spec: QuantSpec
    backend: Optional[str]

    @property
    def interpolated(self) -> bool:
        return self.anchor_level == ANCHOR_INTERPOLATED


def encode_subset(
    gaussians: GaussianSet,
    indices: Iterable[int] | np.ndarray,
    spec: Optional[QuantSpec] = None,
    *,
    anchor_level: int = ANCHOR_INTERPOLATED,
    backend: Optional[EntropyBackend] = DEFAULT_BACKEND,
) -> bytes:
    """Quantize and pack the selected Gaussians (ascending index order).

    Without a pinned `spec` the grid is fitted to the selected subset.
    Passing `backend=None` stores the packed planes uncompressed.
    """
    idx = as_index_array(indices)
    if idx.size == 0:
        raise EmptySelectionError("nothing to encode: the index set is empty")
    subset = gaussians.take(idx)
    spec = spec or fit_spec(subset)
    codes = quantize_planes(subset, spec)
    raw = b"".join(
        pack_codes(plane_codes, plane.bits)
        for plane_codes, (_, plane) in zip(codes, spec.ordered())
    )
    return write_container(
        flags=0,
        canvas_width=gaussians.canvas_width,
        canvas_height=gaussians.canvas_height,
        gaussian_count=subset.count,
        anchor_level=anchor_level,
        planes=[(plane.bits, plane.min, plane.max) for _, plane in spec.ordered()],
        raw_payload=raw,
        backend=backend,
    )


def decode(data: bytes) -> DecodedStream:
    """Rebuild the encoded subset; needs nothing but the bytes."""
    header, raw = read_container(data)
    if header.checkpoint:
        raise CorruptPayloadError("stream is a model checkpoint, not a bitstream")
    spec = header.quant_spec()
    count = header.gaussian_count
    expected = sum(packed_size(count, plane.bits) for _, plane in spec.ordered())
    if expected != len(raw):
        raise CorruptPayloadError(
            f"payload holds {len(raw)} bytes, {count} Gaussians need {expected}"
        )
    planes = []
    offset = 0
    for _, plane in spec.ordered():
        size = packed_size(count, plane.bits)
        codes = unpack_codes(raw[offset : offset + size], count, plane.bits)
        planes.append(dequantize_array(codes, plane))
        offset += size
    gaussians = GaussianSet.from_planes(
        planes, header.canvas_width, header.canvas_height
    )
    backend = backend_for_id(header.backend_id).name if header.compressed else None
    return DecodedStream(
        gaussians=gaussians,
        anchor_level=header.anchor_level,
        quant_spec=spec,
        backend=backend,
    )


class RateMeter:
    """Memoized `measure_rate` keyed by (model, indices, grid, backend)."""

    def __init__(self, backend: Optional[EntropyBackend] = DEFAULT_BACKEND) -> None:
        self.backend = backend
        self._cache: dict[tuple[str, str, str], int] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def measure(
        self,
        gaussians: GaussianSet,
        indices: Iterable[int] | np.ndarray,
        spec: Optional[QuantSpec] = None,
    ) -> int:
        idx = as_index_array(indices)
        key = (
            gaussians.fingerprint(),
            hashlib.sha256(idx.astype("<i8").tobytes()).hexdigest(),
            spec.fingerprint() if spec is not None else "fitted",
        )
        with self._lock:
            if key in self._cache:
                self.hits += 1
                return self._cache[key]
        rate = len(encode_subset(gaussians, idx, spec, backend=self.backend))
        with self._lock:
            self.misses += 1
            self._cache[key] = rate
        return rate


def measure_rate(
    gaussians: GaussianSet,
    indices: Iterable[int] | np.ndarray,
    spec: Optional[QuantSpec] = None,
    *,
    backend: Optional[EntropyBackend] = DEFAULT_BACKEND,
) -> int:
    """Byte length of the bitstream `encode_subset` would produce."""
    return len(encode_subset(gaussians, indices, spec, backend=backend))
