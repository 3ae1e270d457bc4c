"""Entropy-coding backends.

A backend turns the packed attribute planes into bytes and back. Swapping
backends changes the payload and the measured rates, never decoded values.
The backend id is stored in the container flags.
"""

from __future__ import annotations

import bz2
import lzma
import zlib
from dataclasses import dataclass
from typing import Optional, Protocol

from ..exceptions import CorruptPayloadError, InvalidConfigError

# pinned so that measured rates are stable across runs
LZMA_PRESET = 9 | lzma.PRESET_EXTREME


class EntropyBackend(Protocol):
    name: str
    backend_id: int

    def compress(self, data: bytes) -> bytes:
        """Return the compressed payload."""
        ...

    def decompress(self, data: bytes) -> bytes:
        """Invert `compress` or raise CorruptPayloadError."""
        ...


@dataclass(frozen=True)
class LzmaBackend:
    name: str = "lzma"
    backend_id: int = 0

    def compress(self, data: bytes) -> bytes:
        return lzma.compress(data, format=lzma.FORMAT_ALONE, preset=LZMA_PRESET)

    def decompress(self, data: bytes) -> bytes:
        try:
            return lzma.decompress(data, format=lzma.FORMAT_ALONE)
        except lzma.LZMAError as err:
            raise CorruptPayloadError(f"LZMA payload is corrupt: {err}") from err


@dataclass(frozen=True)
class ZlibBackend:
    name: str = "zlib"
    backend_id: int = 1

    def compress(self, data: bytes) -> bytes:
        return zlib.compress(data, 9)

    def decompress(self, data: bytes) -> bytes:
        try:
            return zlib.decompress(data)
        except zlib.error as err:
            raise CorruptPayloadError(f"zlib payload is corrupt: {err}") from err


@dataclass(frozen=True)
class Bz2Backend:
    name: str = "bz2"
    backend_id: int = 2

    def compress(self, data: bytes) -> bytes:
        return bz2.compress(data, 9)

    def decompress(self, data: bytes) -> bytes:
        try:
            return bz2.decompress(data)
        except (OSError, ValueError) as err:
            raise CorruptPayloadError(f"bz2 payload is corrupt: {err}") from err


BACKENDS: dict[str, EntropyBackend] = {
    backend.name: backend for backend in (LzmaBackend(), ZlibBackend(), Bz2Backend())
}
BACKENDS_BY_ID: dict[int, EntropyBackend] = {b.backend_id: b for b in BACKENDS.values()}

DEFAULT_BACKEND: EntropyBackend = BACKENDS["lzma"]


def get_backend(name: str) -> EntropyBackend:
    try:
        return BACKENDS[name]
    except KeyError:
        raise InvalidConfigError(
            f"unknown entropy backend '{name}' (choose from {', '.join(BACKENDS)})"
        ) from None


def backend_for_id(backend_id: int) -> EntropyBackend:
    try:
        return BACKENDS_BY_ID[backend_id]
    except KeyError:
        raise CorruptPayloadError(f"unknown entropy backend id {backend_id}") from None


# CLI spelling for an uncompressed payload (flags bit 0 cleared)
UNCOMPRESSED = "none"


def resolve_backend(name: str) -> Optional[EntropyBackend]:
    if name == UNCOMPRESSED:
        return None
    return get_backend(name)
