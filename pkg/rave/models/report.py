"""Report rows produced by rate control and the sweep harness."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import Field

from .base import RaveModel

ScoringMode = Literal["local", "global"]
SweepMode = Literal["local", "global", "multi-anchor"]

# column order of the sweep CSV
SWEEP_COLUMNS: tuple[str, ...] = (
    "mode",
    "target_rate_bytes",
    "achieved_rate_bytes",
    "num_gaussians",
    "anchor_level",
    "psnr_db",
    "ssim",
)


class RateReport(RaveModel):
    target_rate_bytes: int = Field(ge=0)
    achieved_rate_bytes: int = Field(gt=0)
    level: int = Field(ge=1)
    count: int = Field(ge=1)
    mode: ScoringMode = "local"
    clamped: Optional[str] = None
    corrected: bool = False


class SweepRow(RaveModel):
    mode: SweepMode
    target_rate_bytes: int = Field(ge=0)
    achieved_rate_bytes: int = Field(gt=0)
    num_gaussians: int = Field(ge=1)
    anchor_level: int = Field(ge=1)
    psnr_db: float
    ssim: float

    def as_record(self) -> dict[str, object]:
        return {column: getattr(self, column) for column in SWEEP_COLUMNS}
