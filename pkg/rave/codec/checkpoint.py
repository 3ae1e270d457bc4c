"""Model checkpoints in the RAVS container.

A checkpoint sets flags bit 1, stores every plane as raw little-endian
float32 (plane header bits = 32, min = max = 0) and appends tagged sections
after the planes. Each section is `tag u8 | length u32 | body`:

    1 hierarchy   L u8 | L x fraction f64 | per level: n u32, n x index u32
    2 scores      level u8 | mode u8 (0 local, 1 global) | sidecar records
    3 rates       L u8 | per level: count u32, bytes u64
    4 quant spec  10 x (bits u8, min f32, max f32)

Unknown tags are skipped so older readers can open newer checkpoints.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from pydantic import ValidationError

from ..exceptions import CorruptPayloadError, InvalidSpecError, RaveError
from ..hierarchy import AnchorHierarchy
from ..importance import ScoreTable
from ..models.quant import PLANE_NAMES, QuantPlane, QuantSpec
from ..rate_control import RateTable
from ..splat.gaussians import GaussianSet
from .backends import DEFAULT_BACKEND, EntropyBackend
from .bitstream import (
    FLAG_CHECKPOINT,
    RAW_F32_BITS,
    DecodedStream,
    decode,
    read_container,
    write_container,
)

logger = logging.getLogger(__name__)

TAG_HIERARCHY = 1
TAG_SCORES = 2
TAG_RATES = 3
TAG_QUANT = 4

MODE_IDS = {"local": 0, "global": 1}
MODE_NAMES = {v: k for k, v in MODE_IDS.items()}

_SECTION = struct.Struct("<BI")
_PLANE = struct.Struct("<Bff")


@dataclass(frozen=True)
class Checkpoint:
    """A trained model plus whatever rate-control state was precomputed."""

    gaussians: GaussianSet
    hierarchy: Optional[AnchorHierarchy] = None
    rate_table: Optional[RateTable] = None
    quant_spec: Optional[QuantSpec] = None


def round_to_f32(gaussians: GaussianSet) -> GaussianSet:
    """Values exactly as a checkpoint will store them."""
    return gaussians.astype(np.float32).astype(np.float64)


def _section(tag: int, body: bytes) -> bytes:
    return _SECTION.pack(tag, len(body)) + body


def _hierarchy_body(hierarchy: AnchorHierarchy) -> bytes:
    parts = [struct.pack("<B", hierarchy.levels)]
    parts.append(struct.pack(f"<{hierarchy.levels}d", *hierarchy.fractions))
    for context in hierarchy.contexts:
        parts.append(struct.pack("<I", context.size))
        parts.append(context.astype("<u4").tobytes())
    return b"".join(parts)


def _rates_body(table: RateTable) -> bytes:
    parts = [struct.pack("<B", table.levels)]
    for count, rate in zip(table.counts, table.rates):
        parts.append(struct.pack("<IQ", count, rate))
    return b"".join(parts)


def _quant_body(spec: QuantSpec) -> bytes:
    return b"".join(
        _PLANE.pack(plane.bits, plane.min, plane.max) for _, plane in spec.ordered()
    )


def encode_checkpoint(
    checkpoint: Checkpoint, backend: Optional[EntropyBackend] = DEFAULT_BACKEND
) -> bytes:
    gaussians = checkpoint.gaussians
    raw = [
        np.ascontiguousarray(plane, dtype="<f4").tobytes()
        for plane in gaussians.planes()
    ]
    hierarchy = checkpoint.hierarchy
    if hierarchy is not None:
        raw.append(_section(TAG_HIERARCHY, _hierarchy_body(hierarchy)))
        for (level, mode), table in sorted(hierarchy.cached_scores().items()):
            head = struct.pack("<BB", level, MODE_IDS[mode])
            raw.append(_section(TAG_SCORES, head + table.to_bytes()))
    if checkpoint.rate_table is not None:
        raw.append(_section(TAG_RATES, _rates_body(checkpoint.rate_table)))
    if checkpoint.quant_spec is not None:
        raw.append(_section(TAG_QUANT, _quant_body(checkpoint.quant_spec)))

    return write_container(
        flags=FLAG_CHECKPOINT,
        canvas_width=gaussians.canvas_width,
        canvas_height=gaussians.canvas_height,
        gaussian_count=gaussians.count,
        anchor_level=0,
        planes=[(RAW_F32_BITS, 0.0, 0.0)] * len(PLANE_NAMES),
        raw_payload=b"".join(raw),
        backend=backend,
    )


class _Reader:
    def __init__(self, data: bytes, what: str) -> None:
        self.data = data
        self.offset = 0
        self.what = what

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise CorruptPayloadError(f"{self.what} ends early")
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    @property
    def exhausted(self) -> bool:
        return self.offset >= len(self.data)


def _read_hierarchy(body: bytes, count: int) -> AnchorHierarchy:
    reader = _Reader(body, "hierarchy section")
    (levels,) = reader.unpack("<B")
    fractions = reader.unpack(f"<{levels}d")
    contexts = []
    for _ in range(levels):
        (size,) = reader.unpack("<I")
        contexts.append(
            np.frombuffer(reader.take(4 * size), dtype="<u4").astype(np.int64)
        )
    try:
        return AnchorHierarchy(contexts, count, fractions)
    except InvalidSpecError as err:
        raise CorruptPayloadError(f"stored hierarchy is invalid: {err}") from err


def _read_rates(body: bytes) -> RateTable:
    reader = _Reader(body, "rate section")
    (levels,) = reader.unpack("<B")
    pairs = [reader.unpack("<IQ") for _ in range(levels)]
    try:
        return RateTable(
            counts=tuple(c for c, _ in pairs), rates=tuple(r for _, r in pairs)
        )
    except RaveError as err:
        raise CorruptPayloadError(f"stored rate table is invalid: {err}") from err


def _read_quant(body: bytes) -> QuantSpec:
    reader = _Reader(body, "quantization section")
    try:
        return QuantSpec(
            planes={
                name: QuantPlane(
                    **dict(zip(("bits", "min", "max"), reader.unpack("<Bff")))
                )
                for name in PLANE_NAMES
            }
        )
    except ValidationError as err:
        raise CorruptPayloadError(
            f"stored quantization grid is invalid: {err}"
        ) from err


def decode_checkpoint(data: bytes) -> Checkpoint:
    header, raw = read_container(data)
    if not header.checkpoint:
        raise CorruptPayloadError("stream is a bitstream, not a model checkpoint")
    count = header.gaussian_count
    reader = _Reader(raw, "checkpoint payload")
    planes = [
        np.frombuffer(reader.take(4 * count), dtype="<f4").astype(np.float64)
        for _ in PLANE_NAMES
    ]
    gaussians = GaussianSet.from_planes(
        planes, header.canvas_width, header.canvas_height
    )

    hierarchy: Optional[AnchorHierarchy] = None
    rate_table: Optional[RateTable] = None
    quant_spec: Optional[QuantSpec] = None
    while not reader.exhausted:
        tag, length = reader.unpack("<BI")
        body = reader.take(length)
        if tag == TAG_HIERARCHY:
            hierarchy = _read_hierarchy(body, count)
        elif tag == TAG_SCORES:
            if hierarchy is None or len(body) < 2:
                raise CorruptPayloadError("score section without a hierarchy")
            level, mode_id = body[0], body[1]
            if mode_id not in MODE_NAMES:
                raise CorruptPayloadError(f"unknown scoring mode id {mode_id}")
            mode = MODE_NAMES[mode_id]
            try:
                table = ScoreTable.from_bytes(
                    body[2:], provenance=f"level={level};mode={mode}"
                )
                hierarchy.store_scores(level, mode, table)
            except RaveError as err:
                raise CorruptPayloadError(f"stored scores are invalid: {err}") from err
        elif tag == TAG_RATES:
            rate_table = _read_rates(body)
        elif tag == TAG_QUANT:
            quant_spec = _read_quant(body)
        else:
            logger.debug(f"Skipping unknown checkpoint section {tag} ({length} bytes)")

    return Checkpoint(
        gaussians=gaussians,
        hierarchy=hierarchy,
        rate_table=rate_table,
        quant_spec=quant_spec,
    )


def load_artifact(data: bytes) -> Union[Checkpoint, DecodedStream]:
    """Open either a checkpoint or a bitstream, whichever `data` holds."""
    header, _ = read_container(data)
    if header.checkpoint:
        return decode_checkpoint(data)
    return decode(data)
