"""Shared fixtures: procedural images and random Gaussian sets."""

from __future__ import annotations

from typing import Callable

import numpy as np
import pytest

from rave.hierarchy import build_hierarchy
from rave.models.hierarchy import LevelSpec
from rave.models.train import TrainConfig
from rave.splat.gaussians import GaussianSet, ImageBuffer
from rave.training.trainer import finetune_stochastic, init_from_image, train


def toy_pixels(size: int = 64) -> np.ndarray:
    """Deterministic natural-ish scene: gradient sky, a disc, a bar, texture."""
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    u, v = xs / size, ys / size
    img = np.empty((size, size, 3))
    img[..., 0] = 0.25 + 0.5 * u
    img[..., 1] = 0.35 + 0.3 * v
    img[..., 2] = 0.7 - 0.4 * v
    disc = (u - 0.35) ** 2 + (v - 0.4) ** 2 < 0.04
    img[disc] = (0.9, 0.8, 0.2)
    bar = (np.abs(u - 0.72) < 0.08) & (v > 0.3) & (v < 0.9)
    img[bar] = (0.15, 0.2, 0.55)
    img += 0.05 * np.sin(9.0 * u)[..., None] * np.cos(7.0 * v)[..., None]
    return np.clip(img, 0.0, 1.0)


@pytest.fixture
def toy_image() -> ImageBuffer:
    return ImageBuffer(toy_pixels(64))


@pytest.fixture
def small_image() -> ImageBuffer:
    return ImageBuffer(toy_pixels(24))


@pytest.fixture
def make_gaussians() -> Callable[..., GaussianSet]:
    """Factory for random, well-conditioned Gaussian sets."""

    def factory(
        count: int,
        width: int = 16,
        height: int = 16,
        seed: int = 0,
        log_scale_range: tuple[float, float] = (0.2, 1.2),
        opacity_logit_range: tuple[float, float] = (-1.5, 1.5),
    ) -> GaussianSet:
        rng = np.random.default_rng(seed)
        return GaussianSet(
            pos=rng.uniform((1.0, 1.0), (width - 1.0, height - 1.0), size=(count, 2)),
            log_scale=rng.uniform(*log_scale_range, size=(count, 2)),
            rotation=rng.uniform(-np.pi, np.pi, size=count),
            opacity_logit=rng.uniform(*opacity_logit_range, size=count),
            color=rng.uniform(0.1, 0.9, size=(count, 3)),
            depth_key=rng.permutation(count).astype(np.float64),
            canvas_width=width,
            canvas_height=height,
        )

    return factory


@pytest.fixture
def make_image() -> Callable[..., ImageBuffer]:
    def factory(width: int = 16, height: int = 16, seed: int = 1) -> ImageBuffer:
        rng = np.random.default_rng(seed)
        return ImageBuffer(rng.uniform(0.0, 1.0, size=(height, width, 3)))

    return factory


@pytest.fixture(scope="session")
def trained_toy():
    """512 Gaussians fitted to the 64x64 toy scene for 2000 iterations."""
    image = ImageBuffer(toy_pixels(64))
    config = TrainConfig(num_gaussians=512, iterations=2000, seed=0)
    return image, init_from_image(image, config), train(image, config)


@pytest.fixture(scope="session")
def finetuned_toy(trained_toy):
    """Five-anchor hierarchy over the trained toy model, then fine-tuned."""
    image, _, trained = trained_toy
    hierarchy = build_hierarchy(trained.gaussians, LevelSpec(), image)
    return hierarchy, finetune_stochastic(trained.gaussians, hierarchy, image)
