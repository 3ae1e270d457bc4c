"""Quantization grid description for the ten attribute planes."""

from __future__ import annotations

import numpy as np
from pydantic import Field, field_validator, model_validator

from .base import RaveModel

# plane order is part of the container format
PLANE_NAMES: tuple[str, ...] = (
    "pos.x",
    "pos.y",
    "log_scale.x",
    "log_scale.y",
    "rotation",
    "opacity_logit",
    "color.r",
    "color.g",
    "color.b",
    "depth_key",
)

DEFAULT_BITS: dict[str, int] = {
    "pos.x": 16,
    "pos.y": 16,
    "log_scale.x": 12,
    "log_scale.y": 12,
    "rotation": 12,
    "opacity_logit": 8,
    "color.r": 8,
    "color.g": 8,
    "color.b": 8,
    "depth_key": 16,
}

MAX_BITS = 16


def as_f32(value: float) -> float:
    """Round a float to the nearest 32-bit value, as stored in the header."""
    return float(np.float32(value))


class QuantPlane(RaveModel):
    """Uniform min-max grid for one plane.

    `bits=0` marks a constant plane: no codes are stored and every value
    decodes to `min`.
    """

    bits: int = Field(ge=0, le=MAX_BITS)
    min: float
    max: float

    @field_validator("min", "max")
    @classmethod
    def _finite_f32(cls, value: float) -> float:
        if not np.isfinite(value):
            raise ValueError("plane range must be finite")
        return as_f32(value)

    @model_validator(mode="after")
    def _ordered_range(self) -> "QuantPlane":
        if self.bits == 0:
            if self.min > self.max:
                raise ValueError("constant plane needs min <= max")
        elif not self.min < self.max:
            raise ValueError("plane needs min < max unless bits == 0")
        return self

    @property
    def levels(self) -> int:
        return (1 << self.bits) - 1


class QuantSpec(RaveModel):
    planes: dict[str, QuantPlane]

    @field_validator("planes")
    @classmethod
    def _all_planes(cls, value: dict[str, QuantPlane]) -> dict[str, QuantPlane]:
        if set(value) != set(PLANE_NAMES):
            missing = sorted(set(PLANE_NAMES) - set(value))
            extra = sorted(set(value) - set(PLANE_NAMES))
            raise ValueError(f"plane set mismatch (missing={missing}, extra={extra})")
        return {name: value[name] for name in PLANE_NAMES}

    def plane(self, name: str) -> QuantPlane:
        return self.planes[name]

    def ordered(self) -> list[tuple[str, QuantPlane]]:
        return [(name, self.planes[name]) for name in PLANE_NAMES]

    def fingerprint(self) -> str:
        return self.model_dump_json()
