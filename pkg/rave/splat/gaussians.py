"""Gaussian primitives and image buffers.

`GaussianSet` is a structure of arrays: Gaussian i is row i of every attribute
array, and subsets are always taken in ascending index order so identity is
never lost to a reordering.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np

from ..exceptions import InvalidInputError, InvalidParameterError

ATTRIBUTE_WIDTHS: dict[str, int] = {
    "pos": 2,
    "log_scale": 2,
    "rotation": 1,
    "opacity_logit": 1,
    "color": 3,
    "depth_key": 1,
}

# attributes that carry gradients (depth_key only orders compositing)
TRAINABLE: tuple[str, ...] = (
    "pos",
    "log_scale",
    "rotation",
    "opacity_logit",
    "color",
)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def as_index_array(indices: Iterable[int] | np.ndarray) -> np.ndarray:
    """Sorted, de-duplicated int64 index array."""
    if isinstance(indices, np.ndarray):
        return np.unique(indices.astype(np.int64, copy=False))
    return np.unique(np.fromiter(indices, dtype=np.int64))


@dataclass(frozen=True)
class Gaussian2D:
    pos: np.ndarray
    log_scale: np.ndarray
    rotation: float
    opacity_logit: float
    color: np.ndarray
    depth_key: float = 0.0

    @property
    def opacity(self) -> float:
        return float(sigmoid(np.asarray(self.opacity_logit)))

    @property
    def scale(self) -> np.ndarray:
        return np.exp(np.asarray(self.log_scale, dtype=np.float64))


@dataclass(frozen=True)
class GaussianSet:
    pos: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray
    opacity_logit: np.ndarray
    color: np.ndarray
    depth_key: np.ndarray
    canvas_width: int
    canvas_height: int

    def __post_init__(self) -> None:
        if self.canvas_width < 1 or self.canvas_height < 1:
            raise InvalidParameterError(
                f"canvas must be positive, got {self.canvas_width}x{self.canvas_height}"
            )
        count = self.pos.shape[0] if self.pos.ndim else -1
        for name, width in ATTRIBUTE_WIDTHS.items():
            arr = getattr(self, name)
            expected = (count, width) if width > 1 else (count,)
            if arr.shape != expected:
                raise InvalidParameterError(
                    f"attribute '{name}' has shape {arr.shape}, expected {expected}"
                )

    @property
    def count(self) -> int:
        return int(self.pos.shape[0])

    @property
    def opacity(self) -> np.ndarray:
        return sigmoid(self.opacity_logit)

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    @classmethod
    def empty(cls, width: int, height: int) -> "GaussianSet":
        return cls(
            pos=np.zeros((0, 2)),
            log_scale=np.zeros((0, 2)),
            rotation=np.zeros(0),
            opacity_logit=np.zeros(0),
            color=np.zeros((0, 3)),
            depth_key=np.zeros(0),
            canvas_width=width,
            canvas_height=height,
        )

    @classmethod
    def from_gaussians(
        cls, gaussians: list[Gaussian2D], width: int, height: int
    ) -> "GaussianSet":
        if not gaussians:
            return cls.empty(width, height)
        return cls(
            pos=np.array([g.pos for g in gaussians], dtype=np.float64),
            log_scale=np.array([g.log_scale for g in gaussians], dtype=np.float64),
            rotation=np.array([g.rotation for g in gaussians], dtype=np.float64),
            opacity_logit=np.array(
                [g.opacity_logit for g in gaussians], dtype=np.float64
            ),
            color=np.array([g.color for g in gaussians], dtype=np.float64),
            depth_key=np.array([g.depth_key for g in gaussians], dtype=np.float64),
            canvas_width=width,
            canvas_height=height,
        )

    def gaussian(self, index: int) -> Gaussian2D:
        return Gaussian2D(
            pos=self.pos[index].copy(),
            log_scale=self.log_scale[index].copy(),
            rotation=float(self.rotation[index]),
            opacity_logit=float(self.opacity_logit[index]),
            color=self.color[index].copy(),
            depth_key=float(self.depth_key[index]),
        )

    def take(self, indices: Iterable[int] | np.ndarray) -> "GaussianSet":
        """Subset in ascending index order, renumbered 0..n-1."""
        idx = as_index_array(indices)
        if idx.size and (idx[0] < 0 or idx[-1] >= self.count):
            raise InvalidInputError(
                f"subset indices must lie in [0, {self.count}), "
                f"got range [{idx[0]}, {idx[-1]}]"
            )
        return replace(
            self, **{name: getattr(self, name)[idx] for name in ATTRIBUTE_WIDTHS}
        )

    def with_attributes(self, **arrays: np.ndarray) -> "GaussianSet":
        return replace(self, **arrays)

    def astype(self, dtype: np.dtype | str) -> "GaussianSet":
        return replace(
            self,
            **{
                name: getattr(self, name).astype(dtype, copy=False)
                for name in ATTRIBUTE_WIDTHS
            },
        )

    def copy(self) -> "GaussianSet":
        return replace(
            self, **{name: getattr(self, name).copy() for name in ATTRIBUTE_WIDTHS}
        )

    def planes(self) -> list[np.ndarray]:
        """The ten scalar planes in container order."""
        return [
            self.pos[:, 0],
            self.pos[:, 1],
            self.log_scale[:, 0],
            self.log_scale[:, 1],
            self.rotation,
            self.opacity_logit,
            self.color[:, 0],
            self.color[:, 1],
            self.color[:, 2],
            self.depth_key,
        ]

    @classmethod
    def from_planes(
        cls, planes: list[np.ndarray], width: int, height: int
    ) -> "GaussianSet":
        p = [np.asarray(plane, dtype=np.float64) for plane in planes]
        return cls(
            pos=np.stack([p[0], p[1]], axis=1),
            log_scale=np.stack([p[2], p[3]], axis=1),
            rotation=p[4],
            opacity_logit=p[5],
            color=np.stack([p[6], p[7], p[8]], axis=1),
            depth_key=p[9],
            canvas_width=width,
            canvas_height=height,
        )

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(f"{self.canvas_width}x{self.canvas_height}".encode())
        for plane in self.planes():
            digest.update(np.ascontiguousarray(plane, dtype="<f8").tobytes())
        return digest.hexdigest()

    def check_finite(self) -> None:
        for name in ATTRIBUTE_WIDTHS:
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidParameterError(f"attribute '{name}' has non-finite values")


@dataclass(frozen=True)
class GaussianGrads:
    """Per-parameter gradients, shaped like the trainable attributes."""

    pos: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray
    opacity_logit: np.ndarray
    color: np.ndarray

    @classmethod
    def zeros(cls, count: int, dtype: np.dtype | str = np.float64) -> "GaussianGrads":
        return cls(
            pos=np.zeros((count, 2), dtype=dtype),
            log_scale=np.zeros((count, 2), dtype=dtype),
            rotation=np.zeros(count, dtype=dtype),
            opacity_logit=np.zeros(count, dtype=dtype),
            color=np.zeros((count, 3), dtype=dtype),
        )

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TRAINABLE}

    def flat(self) -> np.ndarray:
        """(count, 9) matrix: pos, log_scale, rotation, opacity_logit, color."""
        return np.concatenate(
            [
                self.pos,
                self.log_scale,
                self.rotation[:, None],
                self.opacity_logit[:, None],
                self.color,
            ],
            axis=1,
        )


@dataclass(frozen=True)
class ImageBuffer:
    """Row-major RGB image, shape (height, width, 3)."""

    pixels: np.ndarray
    metadata: Optional[dict[str, str]] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise InvalidInputError(
                f"image must have shape (H, W, 3), got {self.pixels.shape}"
            )
        if self.pixels.shape[0] < 1 or self.pixels.shape[1] < 1:
            raise InvalidInputError("image must have a positive area")

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @classmethod
    def filled(
        cls, width: int, height: int, rgb: tuple[float, float, float]
    ) -> "ImageBuffer":
        pixels = np.empty((height, width, 3), dtype=np.float64)
        pixels[...] = np.asarray(rgb, dtype=np.float64)
        return cls(pixels)


def require_same_shape(a: ImageBuffer, b: ImageBuffer) -> None:
    if a.pixels.shape != b.pixels.shape:
        raise InvalidInputError(
            f"image dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
