"""Base training and quantization-aware fine-tuning.

Both loops run Adam against `combined_loss`. Fine-tuning samples one anchor
per iteration, renders only that anchor through the quantization grid and
passes the gradient straight through the rounding to the rows of the anchor.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..codec.quant import fit_spec, quantize_set
from ..exceptions import (
    DivergenceError,
    EmptySelectionError,
    InvalidInputError,
    InvalidParameterError,
)
from ..hierarchy import AnchorHierarchy
from ..metrics import combined_loss, psnr
from ..models.loss import LossConfig
from ..models.quant import QuantSpec
from ..models.render import RenderConfig
from ..models.train import FinetuneConfig, LearningRates, TrainConfig
from ..splat.gaussians import TRAINABLE, GaussianSet, ImageBuffer
from ..splat.raster import rasterize
from .optim import Adam, decayed_rates

logger = logging.getLogger(__name__)

# share of the sampling density spread uniformly over the canvas
UNIFORM_FLOOR = 0.2


@dataclass(frozen=True)
class TrainResult:
    gaussians: GaussianSet
    history: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class FinetuneResult:
    gaussians: GaussianSet
    quant_spec: QuantSpec
    levels_sampled: list[int] = field(default_factory=list)
    history: list[float] = field(default_factory=list)
    baseline_psnr: list[float] = field(default_factory=list)
    anchor_psnr: list[float] = field(default_factory=list)


def gradient_magnitude(target: ImageBuffer) -> np.ndarray:
    """Per-pixel gradient norm of the channel mean."""
    luma = target.pixels.mean(axis=2)
    if luma.shape[0] < 2 or luma.shape[1] < 2:
        return np.zeros_like(luma)
    gy, gx = np.gradient(luma)
    return np.hypot(gx, gy)


def init_from_image(target: ImageBuffer, config: TrainConfig) -> GaussianSet:
    """Seed Gaussians where the target has structure, plus a uniform floor."""
    width, height = target.width, target.height
    if width * height == 0:
        raise InvalidInputError("cannot initialize from an image with zero area")
    count = config.num_gaussians
    rng = np.random.default_rng(config.seed)

    magnitude = gradient_magnitude(target).ravel()
    uniform = np.full(magnitude.size, 1.0 / magnitude.size)
    total = magnitude.sum()
    if total > 0.0:
        density = (1.0 - UNIFORM_FLOOR) * magnitude / total + UNIFORM_FLOOR * uniform
    else:
        density = uniform
    density /= density.sum()

    pixels = rng.choice(magnitude.size, size=count, replace=True, p=density)
    rows, cols = np.divmod(pixels, width)
    jitter = rng.random((count, 2))
    pos = np.stack([cols + jitter[:, 0], rows + jitter[:, 1]], axis=1)
    color = target.pixels[rows, cols].astype(np.float64)

    scale = math.sqrt(width * height / count)
    return GaussianSet(
        pos=pos,
        log_scale=np.full((count, 2), math.log(scale)),
        rotation=np.zeros(count),
        opacity_logit=np.zeros(count),
        color=color,
        depth_key=np.arange(count, dtype=np.float64),
        canvas_width=width,
        canvas_height=height,
    )


def _trainable(gaussians: GaussianSet) -> dict[str, np.ndarray]:
    return {name: getattr(gaussians, name).astype(np.float64) for name in TRAINABLE}


def _learning_rates(lr: LearningRates) -> dict[str, float]:
    return {name: getattr(lr, name) for name in TRAINABLE}


def _loss_and_grads(
    gaussians: GaussianSet,
    target: ImageBuffer,
    loss: LossConfig,
    render_config: RenderConfig,
    iteration: int,
) -> tuple[float, dict[str, np.ndarray]]:
    try:
        raster = rasterize(gaussians, render_config)
    except InvalidParameterError as err:
        raise DivergenceError(
            f"parameters became non-finite at iteration {iteration}: {err}", iteration
        ) from err
    value, upstream = combined_loss(raster.image, target, loss)
    if not math.isfinite(value):
        raise DivergenceError(
            f"loss became non-finite at iteration {iteration}", iteration
        )
    return value, raster.backward(upstream).as_dict()


def train(
    target: ImageBuffer,
    config: Optional[TrainConfig] = None,
    render_config: Optional[RenderConfig] = None,
    initial: Optional[GaussianSet] = None,
) -> TrainResult:
    """Fit a fixed number of Gaussians to `target`; no densification."""
    config = config or TrainConfig()
    render_config = render_config or RenderConfig()
    gaussians = initial if initial is not None else init_from_image(target, config)
    canvas = (gaussians.canvas_width, gaussians.canvas_height)
    if canvas != (target.width, target.height):
        raise InvalidInputError("model canvas does not match the target image")

    params = _trainable(gaussians)
    base_lr = _learning_rates(config.lr)
    adam = Adam(params, base_lr, config.adam)
    horizon = max(config.iterations - 1, 1)
    history: list[float] = []
    for iteration in range(config.iterations):
        adam.lr = decayed_rates(base_lr, config.lr_final_factor, iteration, horizon)
        current = gaussians.with_attributes(**params)
        value, grads = _loss_and_grads(
            current, target, config.loss, render_config, iteration
        )
        history.append(value)
        adam.step(params, grads)
        if (iteration + 1) % config.log_every == 0:
            logger.info(f"train {iteration + 1}/{config.iterations}: loss {value:.6f}")

    logger.info(
        f"Trained {gaussians.count} Gaussians for {config.iterations} iterations "
        f"(loss {history[0]:.5f} -> {history[-1]:.5f})"
    )
    return TrainResult(gaussians=gaussians.with_attributes(**params), history=history)


def anchor_psnr(
    gaussians: GaussianSet,
    hierarchy: AnchorHierarchy,
    target: ImageBuffer,
    spec: QuantSpec,
    render_config: Optional[RenderConfig] = None,
) -> list[float]:
    """PSNR of every anchor rendered through the quantization grid."""
    render_config = render_config or RenderConfig()
    values = []
    for level in range(1, hierarchy.levels + 1):
        subset = quantize_set(gaussians.take(hierarchy.level(level)), spec)
        values.append(psnr(rasterize(subset, render_config).image, target))
    return values


def finetune_stochastic(
    gaussians: GaussianSet,
    hierarchy: AnchorHierarchy,
    target: ImageBuffer,
    config: Optional[FinetuneConfig] = None,
    render_config: Optional[RenderConfig] = None,
) -> FinetuneResult:
    """Optimize one uniformly sampled anchor per iteration through the grid.

    Rows outside the sampled anchor keep their parameters and Adam moments.
    The returned model is the last checked state in which no anchor renders
    worse through the grid than the input model did; the input itself
    qualifies when no later state does.
    """
    config = config or FinetuneConfig()
    render_config = render_config or RenderConfig()
    if hierarchy.levels == 0 or gaussians.count == 0:
        raise EmptySelectionError("fine-tuning needs a non-empty hierarchy")
    if hierarchy.count != gaussians.count:
        raise InvalidInputError(
            f"hierarchy covers {hierarchy.count} Gaussians, model has {gaussians.count}"
        )
    spec = config.quant or fit_spec(gaussians)
    rng = np.random.default_rng(config.seed)
    anchors = [hierarchy.level(level) for level in range(1, hierarchy.levels + 1)]
    baseline = anchor_psnr(gaussians, hierarchy, target, spec, render_config)
    logger.debug(f"anchor PSNR before fine-tuning: {_format_db(baseline)}")

    params = _trainable(gaussians)
    base_lr = _learning_rates(config.lr)
    adam = Adam(params, base_lr, config.adam)
    horizon = max(config.iterations - 1, 1)
    accepted = ({k: v.copy() for k, v in params.items()}, adam.snapshot())
    accepted_psnr = baseline
    scale = 1.0
    history: list[float] = []
    sampled: list[int] = []
    for iteration in range(config.iterations):
        rates = decayed_rates(base_lr, config.lr_final_factor, iteration, horizon)
        adam.lr = {name: lr * scale for name, lr in rates.items()}
        level = int(rng.integers(1, hierarchy.levels + 1))
        rows = anchors[level - 1]
        subset = gaussians.with_attributes(**params).take(rows)
        value, sub_grads = _loss_and_grads(
            quantize_set(subset, spec), target, config.loss, render_config, iteration
        )
        grads = {name: np.zeros_like(param) for name, param in params.items()}
        for name, grad in sub_grads.items():
            grads[name][rows] = grad
        adam.step(params, grads, rows)
        history.append(value)
        sampled.append(level)
        if (iteration + 1) % config.log_every == 0:
            logger.info(
                f"finetune {iteration + 1}/{config.iterations}: level {level}, "
                f"loss {value:.6f}"
            )

        last = iteration + 1 == config.iterations
        if not config.guard or ((iteration + 1) % config.check_every and not last):
            continue
        current = anchor_psnr(
            gaussians.with_attributes(**params), hierarchy, target, spec, render_config
        )
        if all(now >= before for now, before in zip(current, baseline)):
            accepted = ({k: v.copy() for k, v in params.items()}, adam.snapshot())
            accepted_psnr = current
            continue
        scale *= config.backoff
        logger.info(
            f"finetune {iteration + 1}: an anchor fell below its starting PSNR; "
            f"rolling back and scaling rates by {scale:g}"
        )
        params = {k: v.copy() for k, v in accepted[0].items()}
        adam.restore(accepted[1])

    if not config.guard:
        accepted = (params, adam.snapshot())
        accepted_psnr = anchor_psnr(
            gaussians.with_attributes(**params), hierarchy, target, spec, render_config
        )
    logger.debug(f"anchor PSNR after fine-tuning: {_format_db(accepted_psnr)}")
    return FinetuneResult(
        gaussians=gaussians.with_attributes(**accepted[0]),
        quant_spec=spec,
        levels_sampled=sampled,
        history=history,
        baseline_psnr=baseline,
        anchor_psnr=accepted_psnr,
    )


def _format_db(values: list[float]) -> str:
    return ", ".join(f"{value:.2f}" for value in values)
