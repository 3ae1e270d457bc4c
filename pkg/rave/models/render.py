"""Rasterizer configuration."""

from __future__ import annotations

from typing import Literal

import numpy as np
from pydantic import Field, field_validator

from .base import RaveModel

# alpha is clamped to this value before compositing
ALPHA_MAX = 0.999


class RenderConfig(RaveModel):
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    cutoff_radius_sigmas: float = Field(3.0, gt=0.0)
    precision: Literal["float64", "float32"] = "float64"
    threads: int = Field(1, ge=1)
    # fixed band height; never derived from the worker count
    band_rows: int = Field(16, ge=1)

    @field_validator("background")
    @classmethod
    def _background_in_unit_range(
        cls, value: tuple[float, float, float]
    ) -> tuple[float, float, float]:
        if any(not 0.0 <= channel <= 1.0 for channel in value):
            raise ValueError("background channels must lie in [0, 1]")
        return value

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.precision)
