"""Differentiable 2D splat rasterizer.

Each Gaussian lives on the image plane. Pixels are composited front to back in
(depth_key, index) order:

    C(p) = sum_i c_i a_i(p) T_i(p) + background * T_final(p)
    T_i(p) = prod_{j<i} (1 - a_j(p))

with a_i(p) = min(o_i * G_i(p), ALPHA_MAX) and G_i truncated to zero outside
`cutoff_radius_sigmas` Mahalanobis radius. The truncation and the alpha clamp
are part of the forward definition, so `render_backward` is its exact
derivative.

The canvas is split into fixed-height row bands. Bands are independent in the
forward pass; gradient partials are merged in band order, which keeps results
bit-identical for any worker count.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, TypeVar

import numpy as np

from ..exceptions import InvalidInputError, InvalidParameterError
from ..models.render import ALPHA_MAX, RenderConfig
from .gaussians import Gaussian2D, GaussianGrads, GaussianSet, ImageBuffer, sigmoid

logger = logging.getLogger(__name__)

_T = TypeVar("_T")


@dataclass(frozen=True)
class Covariance:
    sigma: np.ndarray
    inverse: np.ndarray
    det: float


def covariance_from_params(log_scale: np.ndarray, rotation: float) -> Covariance:
    """Build Sigma = R S S^T R^T with S = diag(exp(log_scale))."""
    log_scale = np.asarray(log_scale, dtype=np.float64)
    if log_scale.shape != (2,) or not np.all(np.isfinite(log_scale)):
        raise InvalidParameterError(f"log_scale must be a finite 2-vector: {log_scale}")
    if not math.isfinite(rotation):
        raise InvalidParameterError(f"rotation must be finite: {rotation}")
    cos, sin = math.cos(rotation), math.sin(rotation)
    r = np.array([[cos, -sin], [sin, cos]])
    variances = np.exp(2.0 * log_scale)
    sigma = r @ np.diag(variances) @ r.T
    inverse = r @ np.diag(1.0 / variances) @ r.T
    # symmetrize against rounding in the products
    sigma = 0.5 * (sigma + sigma.T)
    inverse = 0.5 * (inverse + inverse.T)
    return Covariance(sigma=sigma, inverse=inverse, det=float(np.prod(variances)))


def eval_gaussian(gaussian: Gaussian2D, x: np.ndarray) -> float:
    """G(x) = exp(-1/2 (x-pos)^T Sigma^-1 (x-pos)); blending uses o * G(x)."""
    cov = covariance_from_params(gaussian.log_scale, gaussian.rotation)
    d = np.asarray(x, dtype=np.float64) - np.asarray(gaussian.pos, dtype=np.float64)
    return float(np.exp(-0.5 * d @ cov.inverse @ d))


@dataclass(frozen=True)
class _Prepared:
    """Per-Gaussian quantities shared by every band."""

    order: np.ndarray  # compositing order (storage indices)
    pos: np.ndarray
    conic: np.ndarray  # (n, 3): a, b, c of Sigma^-1
    opacity: np.ndarray
    color: np.ndarray  # clamped to [0, 1]
    color_live: np.ndarray  # 1 where the clamp passes gradient
    y_extent: np.ndarray
    x_extent: np.ndarray


def _conic_entries(
    log_scale: np.ndarray, rotation: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    u = np.exp(-2.0 * log_scale[:, 0])
    v = np.exp(-2.0 * log_scale[:, 1])
    cos, sin = np.cos(rotation), np.sin(rotation)
    a = cos * cos * u + sin * sin * v
    b = cos * sin * (u - v)
    c = sin * sin * u + cos * cos * v
    return a, b, c, u, v


def _prepare(gaussians: GaussianSet, config: RenderConfig) -> _Prepared:
    gaussians.check_finite()
    dtype = config.dtype
    order = np.lexsort((np.arange(gaussians.count), gaussians.depth_key))
    a, b, c, _, _ = _conic_entries(gaussians.log_scale, gaussians.rotation)
    # exact extents of the ellipse q <= k^2 are k * sqrt(Sigma_xx), k * sqrt(Sigma_yy)
    s2 = np.exp(2.0 * gaussians.log_scale)
    cos2, sin2 = np.cos(gaussians.rotation) ** 2, np.sin(gaussians.rotation) ** 2
    k = config.cutoff_radius_sigmas
    color = gaussians.color
    return _Prepared(
        order=order,
        pos=gaussians.pos.astype(dtype),
        conic=np.stack([a, b, c], axis=1).astype(dtype),
        opacity=sigmoid(gaussians.opacity_logit).astype(dtype),
        color=np.clip(color, 0.0, 1.0).astype(dtype),
        color_live=((color >= 0.0) & (color <= 1.0)).astype(dtype),
        x_extent=k * np.sqrt(cos2 * s2[:, 0] + sin2 * s2[:, 1]),
        y_extent=k * np.sqrt(sin2 * s2[:, 0] + cos2 * s2[:, 1]),
    )


@dataclass
class _Band:
    """Forward state of one row band, kept for the backward pass."""

    y0: int
    y1: int
    active: np.ndarray  # storage indices in compositing order
    dx: np.ndarray
    dy: np.ndarray
    gauss: np.ndarray
    raw_alpha: np.ndarray
    alpha: np.ndarray
    transmittance: np.ndarray  # exclusive, per active Gaussian
    final_transmittance: np.ndarray
    pixels: np.ndarray  # (P, 3)


@dataclass
class _BandGrads:
    active: np.ndarray
    pos: np.ndarray
    conic: np.ndarray
    opacity: np.ndarray
    color: np.ndarray


def _run_bands(fn: Callable[[int], _T], count: int, threads: int) -> list[_T]:
    if threads <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=min(threads, count)) as pool:
        return list(pool.map(fn, range(count)))


class Rasterization:
    """Forward pass over a GaussianSet with the state needed for backward."""

    def __init__(self, gaussians: GaussianSet, config: RenderConfig) -> None:
        self.gaussians = gaussians
        self.config = config
        self._width = gaussians.canvas_width
        self._height = gaussians.canvas_height
        self._prepared = _prepare(gaussians, config) if gaussians.count else None
        rows = config.band_rows
        self._bounds = [
            (y0, min(y0 + rows, self._height)) for y0 in range(0, self._height, rows)
        ]
        self._bands = _run_bands(
            lambda i: self._forward_band(*self._bounds[i]),
            len(self._bounds),
            config.threads,
        )
        pixels = np.concatenate([band.pixels for band in self._bands], axis=0)
        self.image = ImageBuffer(
            pixels.reshape(self._height, self._width, 3).astype(np.float64)
        )

    def _forward_band(self, y0: int, y1: int) -> _Band:
        dtype = self.config.dtype
        background = np.asarray(self.config.background, dtype=dtype)
        xs = np.arange(self._width, dtype=dtype) + 0.5
        ys = np.arange(y0, y1, dtype=dtype) + 0.5
        px = np.tile(xs, y1 - y0)
        py = np.repeat(ys, self._width)
        npix = px.size

        prep = self._prepared
        if prep is None:
            active = np.zeros(0, dtype=np.int64)
        else:
            order = prep.order
            pos = prep.pos[order]
            ye, xe = prep.y_extent[order], prep.x_extent[order]
            hit = (
                (pos[:, 1] + ye >= ys[0])
                & (pos[:, 1] - ye <= ys[-1])
                & (pos[:, 0] + xe >= xs[0])
                & (pos[:, 0] - xe <= xs[-1])
            )
            active = order[hit]

        if active.size == 0:
            empty = np.zeros((0, npix), dtype=dtype)
            return _Band(
                y0=y0,
                y1=y1,
                active=active,
                dx=empty,
                dy=empty,
                gauss=empty,
                raw_alpha=empty,
                alpha=empty,
                transmittance=empty,
                final_transmittance=np.ones(npix, dtype=dtype),
                pixels=np.broadcast_to(background, (npix, 3)).copy(),
            )

        pos = prep.pos[active]
        a, b, c = (prep.conic[active, k][:, None] for k in range(3))
        dx = px[None, :] - pos[:, 0:1]
        dy = py[None, :] - pos[:, 1:2]
        q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy
        inside = q <= self.config.cutoff_radius_sigmas**2
        gauss = np.where(inside, np.exp(-0.5 * q), 0.0).astype(dtype)
        raw_alpha = prep.opacity[active][:, None] * gauss
        alpha = np.minimum(raw_alpha, dtype.type(ALPHA_MAX))

        survive = np.cumprod(1.0 - alpha, axis=0)
        transmittance = np.empty_like(alpha)
        transmittance[0] = 1.0
        transmittance[1:] = survive[:-1]
        final = survive[-1]

        weights = transmittance * alpha
        pixels = weights.T @ prep.color[active] + final[:, None] * background
        return _Band(
            y0=y0,
            y1=y1,
            active=active,
            dx=dx,
            dy=dy,
            gauss=gauss,
            raw_alpha=raw_alpha,
            alpha=alpha,
            transmittance=transmittance,
            final_transmittance=final,
            pixels=pixels,
        )

    def _backward_band(self, band: _Band, upstream: np.ndarray) -> _BandGrads:
        prep = self._prepared
        n = band.active.size
        dtype = self.config.dtype
        if n == 0:
            zeros = np.zeros((0,), dtype=dtype)
            return _BandGrads(
                active=band.active,
                pos=np.zeros((0, 2), dtype=dtype),
                conic=np.zeros((0, 3), dtype=dtype),
                opacity=zeros,
                color=np.zeros((0, 3), dtype=dtype),
            )
        up = upstream[band.y0 : band.y1].reshape(-1, 3).astype(dtype)
        colors = prep.color[band.active]
        background = np.asarray(self.config.background, dtype=dtype)

        weights = band.transmittance * band.alpha
        grad_color = weights @ up

        # r_i(p) = up(p) . (colour seen behind Gaussian i, normalized by T_{i+1})
        u = colors @ up.T
        r = np.empty_like(u)
        r[n - 1] = up @ background
        for i in range(n - 2, -1, -1):
            a_next = band.alpha[i + 1]
            r[i] = a_next * u[i + 1] + (1.0 - a_next) * r[i + 1]
        d_alpha = band.transmittance * (u - r)
        d_alpha = np.where(band.raw_alpha < ALPHA_MAX, d_alpha, 0.0)

        opacity = prep.opacity[band.active][:, None]
        grad_opacity = np.sum(d_alpha * band.gauss, axis=1)
        d_q = d_alpha * opacity * (-0.5 * band.gauss)

        a, b, c = (prep.conic[band.active, k][:, None] for k in range(3))
        dx, dy = band.dx, band.dy
        grad_pos = np.stack(
            [
                np.sum(d_q * -2.0 * (a * dx + b * dy), axis=1),
                np.sum(d_q * -2.0 * (b * dx + c * dy), axis=1),
            ],
            axis=1,
        )
        grad_conic = np.stack(
            [
                np.sum(d_q * dx * dx, axis=1),
                np.sum(d_q * 2.0 * dx * dy, axis=1),
                np.sum(d_q * dy * dy, axis=1),
            ],
            axis=1,
        )
        return _BandGrads(
            active=band.active,
            pos=grad_pos,
            conic=grad_conic,
            opacity=grad_opacity,
            color=grad_color,
        )

    def backward(self, upstream: np.ndarray) -> GaussianGrads:
        """Gradients of sum(upstream * image) with respect to every parameter."""
        expected = (self._height, self._width, 3)
        if upstream.shape != expected:
            raise InvalidInputError(
                f"upstream gradient has shape {upstream.shape}, expected {expected}"
            )
        count = self.gaussians.count
        grads = GaussianGrads.zeros(count)
        if count == 0:
            return grads

        partials = _run_bands(
            lambda i: self._backward_band(self._bands[i], upstream),
            len(self._bands),
            self.config.threads,
        )
        pos = np.zeros((count, 2))
        conic = np.zeros((count, 3))
        opacity = np.zeros(count)
        color = np.zeros((count, 3))
        # fixed band order keeps the float sums reproducible
        for part in partials:
            pos[part.active] += part.pos
            conic[part.active] += part.conic
            opacity[part.active] += part.opacity
            color[part.active] += part.color

        log_scale = self.gaussians.log_scale
        rotation = self.gaussians.rotation
        _, _, _, u, v = _conic_entries(log_scale, rotation)
        cos, sin = np.cos(rotation), np.sin(rotation)
        d_a, d_b, d_c = conic[:, 0], conic[:, 1], conic[:, 2]
        d_u = d_a * cos * cos + d_b * cos * sin + d_c * sin * sin
        d_v = d_a * sin * sin - d_b * cos * sin + d_c * cos * cos
        d_rot = (
            d_a * 2.0 * cos * sin * (v - u)
            + d_b * (cos * cos - sin * sin) * (u - v)
            + d_c * 2.0 * cos * sin * (u - v)
        )
        o = sigmoid(self.gaussians.opacity_logit)
        return GaussianGrads(
            pos=pos,
            log_scale=np.stack([d_u * -2.0 * u, d_v * -2.0 * v], axis=1),
            rotation=d_rot,
            opacity_logit=opacity * o * (1.0 - o),
            color=color * self._prepared.color_live,
        )


def rasterize(
    gaussians: GaussianSet, config: Optional[RenderConfig] = None
) -> Rasterization:
    return Rasterization(gaussians, config or RenderConfig())


def render(
    gaussians: GaussianSet, config: Optional[RenderConfig] = None
) -> ImageBuffer:
    """Alpha-composite a GaussianSet onto its canvas."""
    return rasterize(gaussians, config).image


def render_backward(
    gaussians: GaussianSet,
    config: Optional[RenderConfig],
    upstream: np.ndarray,
) -> GaussianGrads:
    """Exact gradients of the truncated forward pass for an upstream dL/dC."""
    return rasterize(gaussians, config).backward(upstream)
