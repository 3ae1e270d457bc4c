"""Rendering loss and image quality metrics.

Every loss returns `(value, gradient)` where the gradient is taken with
respect to the first image, shaped like its pixel array. SSIM uses
Gaussian-weighted windows placed only where they fit entirely inside the
image ("valid" windows), averaged over window positions and channels.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import signal

from .exceptions import InvalidInputError
from .models.loss import LossConfig
from .splat.gaussians import ImageBuffer, require_same_shape

# reported for identical images
PSNR_IDENTICAL = math.inf


@lru_cache(maxsize=16)
def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """Normalized 1D Gaussian taps; the 2D window is their outer product."""
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    taps = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def _window_kernel(taps: np.ndarray, ndim: int) -> np.ndarray:
    kernel = np.outer(taps, taps)
    return kernel.reshape(kernel.shape + (1,) * (ndim - 2))


def _filter_valid(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Valid correlation with the 2D window over the first two axes."""
    return signal.correlate(
        x, _window_kernel(taps, x.ndim), mode="valid", method="direct"
    )


def _filter_valid_transpose(y: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Adjoint of `_filter_valid`: full convolution with the same window."""
    return signal.convolve(
        y, _window_kernel(taps, y.ndim), mode="full", method="direct"
    )


def l1_loss(a: ImageBuffer, b: ImageBuffer) -> tuple[float, np.ndarray]:
    """Mean absolute per-channel difference; subgradient 0 at exact ties."""
    require_same_shape(a, b)
    diff = a.pixels - b.pixels
    n = diff.size
    return float(np.abs(diff).sum() / n), np.sign(diff) / n


def ssim(
    a: ImageBuffer, b: ImageBuffer, config: LossConfig | None = None
) -> tuple[float, np.ndarray]:
    """Mean local SSIM and its analytic gradient with respect to `a`."""
    config = config or LossConfig()
    require_same_shape(a, b)
    k = config.ssim_window
    if a.width < k or a.height < k:
        raise InvalidInputError(
            f"image {a.width}x{a.height} is smaller than the {k}x{k} SSIM window"
        )
    taps = gaussian_window(k, config.ssim_sigma)
    c1, c2 = config.ssim_c1, config.ssim_c2
    x, y = a.pixels.astype(np.float64), b.pixels.astype(np.float64)

    mu_x = _filter_valid(x, taps)
    mu_y = _filter_valid(y, taps)
    var_x = _filter_valid(x * x, taps) - mu_x * mu_x
    var_y = _filter_valid(y * y, taps) - mu_y * mu_y
    cov_xy = _filter_valid(x * y, taps) - mu_x * mu_y

    num_l = 2.0 * mu_x * mu_y + c1
    num_c = 2.0 * cov_xy + c2
    den_l = mu_x * mu_x + mu_y * mu_y + c1
    den_c = var_x + var_y + c2
    ssim_map = (num_l * num_c) / (den_l * den_c)
    value = float(ssim_map.mean())

    # partials of each window's SSIM with respect to its local statistics
    d_mu = 2.0 * mu_y * num_c / (den_l * den_c) - ssim_map * 2.0 * mu_x / den_l
    d_var = -ssim_map / den_c
    d_cov = 2.0 * num_l / (den_l * den_c)
    scale = 1.0 / ssim_map.size
    p = (d_mu - 2.0 * mu_x * d_var - mu_y * d_cov) * scale
    q = d_var * scale
    r = d_cov * scale
    grad = (
        _filter_valid_transpose(p, taps)
        + 2.0 * x * _filter_valid_transpose(q, taps)
        + y * _filter_valid_transpose(r, taps)
    )
    return value, grad


def combined_loss(
    render: ImageBuffer, target: ImageBuffer, config: LossConfig | None = None
) -> tuple[float, np.ndarray]:
    """(1 - lambda) * L1 + lambda * (1 - SSIM) and its gradient."""
    config = config or LossConfig()
    weight = config.ssim_lambda
    l1_value, l1_grad = l1_loss(render, target)
    if weight == 0.0:
        return l1_value, l1_grad
    ssim_value, ssim_grad = ssim(render, target, config)
    value = (1.0 - weight) * l1_value + weight * (1.0 - ssim_value)
    grad = (1.0 - weight) * l1_grad - weight * ssim_grad
    return value, grad


def mse(a: ImageBuffer, b: ImageBuffer) -> float:
    require_same_shape(a, b)
    return float(np.mean((a.pixels - b.pixels) ** 2))


def psnr(a: ImageBuffer, b: ImageBuffer) -> float:
    """10 log10(1 / MSE) for a dynamic range of 1; infinite for identical images."""
    error = mse(a, b)
    if error == 0.0:
        return PSNR_IDENTICAL
    return 10.0 * math.log10(1.0 / error)
