"""Rendering loss configuration."""

from __future__ import annotations

from pydantic import Field, field_validator

from .base import RaveModel


class LossConfig(RaveModel):
    """Weights and SSIM constants for the L1 + D-SSIM rendering loss.

    `ssim_lambda` mixes the two terms: (1 - lambda) * L1 + lambda * (1 - SSIM).
    The SSIM constants assume a dynamic range of 1.
    """

    ssim_lambda: float = Field(0.2, ge=0.0, le=1.0)
    ssim_window: int = 11
    ssim_sigma: float = Field(1.5, gt=0.0)
    ssim_c1: float = Field((0.01 * 1.0) ** 2, gt=0.0)
    ssim_c2: float = Field((0.03 * 1.0) ** 2, gt=0.0)

    @field_validator("ssim_window")
    @classmethod
    def _window_odd(cls, value: int) -> int:
        if value < 3 or value % 2 == 0:
            raise ValueError("ssim_window must be odd and >= 3")
        return value
