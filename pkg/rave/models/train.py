"""Optimizer and training-loop configuration."""

from __future__ import annotations

from typing import Optional

from pydantic import Field

from .base import RaveModel
from .loss import LossConfig
from .quant import QuantSpec


class LearningRates(RaveModel):
    """Per-attribute-group Adam learning rates (positions are in pixels)."""

    pos: float = Field(0.05, gt=0.0)
    log_scale: float = Field(0.01, gt=0.0)
    rotation: float = Field(0.01, gt=0.0)
    opacity_logit: float = Field(0.05, gt=0.0)
    color: float = Field(0.01, gt=0.0)

    def scaled(self, factor: float) -> "LearningRates":
        return LearningRates(
            pos=self.pos * factor,
            log_scale=self.log_scale * factor,
            rotation=self.rotation * factor,
            opacity_logit=self.opacity_logit * factor,
            color=self.color * factor,
        )


class AdamSettings(RaveModel):
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    epsilon: float = Field(1e-8, gt=0.0)


class TrainConfig(RaveModel):
    num_gaussians: int = Field(512, ge=1)
    iterations: int = Field(2000, ge=1)
    lr: LearningRates = LearningRates()
    # every rate decays log-linearly to this share of itself by the last step
    lr_final_factor: float = Field(0.01, gt=0.0, le=1.0)
    adam: AdamSettings = AdamSettings()
    seed: int = Field(0, ge=0, lt=2**64)
    loss: LossConfig = LossConfig()
    log_every: int = Field(100, ge=1)


class FinetuneConfig(RaveModel):
    """Quantization-aware fine-tuning with one sampled anchor per iteration.

    `quant` pins the quantization grid; when omitted the grid is fitted to the
    full model with default bit widths before the first iteration.

    Every `check_every` iterations the quantized PSNR of each anchor is
    compared with its value before fine-tuning. A check that finds any anchor
    below its starting value rolls back to the last passing state and scales
    the rates by `backoff`. With `guard` off the last iterate is returned.
    """

    iterations: int = Field(500, ge=1)
    quant: Optional[QuantSpec] = None
    seed: int = Field(0, ge=0, lt=2**64)
    lr: LearningRates = LearningRates().scaled(0.2)
    lr_final_factor: float = Field(0.1, gt=0.0, le=1.0)
    check_every: int = Field(50, ge=1)
    backoff: float = Field(0.5, gt=0.0, lt=1.0)
    guard: bool = True
    adam: AdamSettings = AdamSettings()
    loss: LossConfig = LossConfig()
    log_every: int = Field(100, ge=1)
