"""Uniform min-max scalar quantization of attribute planes."""

from __future__ import annotations

import math
from typing import Iterable, Mapping, Optional

import numpy as np

from ..exceptions import EmptySelectionError, InvalidInputError
from ..models.quant import DEFAULT_BITS, PLANE_NAMES, QuantPlane, QuantSpec
from ..splat.gaussians import GaussianSet, as_index_array


def quantize(value: float, plane: QuantPlane) -> int:
    """round_half_up(clamp((v - min) / (max - min), 0, 1) * (2^bits - 1))."""
    if plane.bits == 0:
        return 0
    normalized = (value - plane.min) / (plane.max - plane.min)
    normalized = min(max(normalized, 0.0), 1.0)
    return int(math.floor(normalized * plane.levels + 0.5))


def dequantize(code: int, plane: QuantPlane) -> float:
    if plane.bits == 0:
        if code != 0:
            raise InvalidInputError(f"constant plane only accepts code 0, got {code}")
        return plane.min
    if not 0 <= code <= plane.levels:
        raise InvalidInputError(f"code {code} outside [0, {plane.levels}]")
    return plane.min + code / plane.levels * (plane.max - plane.min)


def quantize_array(values: np.ndarray, plane: QuantPlane) -> np.ndarray:
    if plane.bits == 0:
        return np.zeros(values.shape, dtype=np.uint16)
    normalized = (np.asarray(values, dtype=np.float64) - plane.min) / (
        plane.max - plane.min
    )
    normalized = np.clip(normalized, 0.0, 1.0)
    return np.floor(normalized * plane.levels + 0.5).astype(np.uint16)


def dequantize_array(codes: np.ndarray, plane: QuantPlane) -> np.ndarray:
    if plane.bits == 0:
        return np.full(codes.shape, plane.min, dtype=np.float64)
    if codes.size and int(codes.max()) > plane.levels:
        raise InvalidInputError(f"code {int(codes.max())} outside [0, {plane.levels}]")
    return plane.min + codes.astype(np.float64) / plane.levels * (plane.max - plane.min)


def _f32_floor(value: float) -> float:
    f = np.float32(value)
    if float(f) > value:
        f = np.nextafter(f, np.float32(-np.inf))
    return float(f)


def _f32_ceil(value: float) -> float:
    f = np.float32(value)
    if float(f) < value:
        f = np.nextafter(f, np.float32(np.inf))
    return float(f)


def fit_plane(values: np.ndarray, bits: int) -> QuantPlane:
    """Grid spanning the values, widened outward to 32-bit float endpoints."""
    lo = _f32_floor(float(np.min(values)))
    hi = _f32_ceil(float(np.max(values)))
    if lo == hi or bits == 0:
        return QuantPlane(bits=0, min=lo, max=lo)
    return QuantPlane(bits=bits, min=lo, max=hi)


def fit_spec(
    gaussians: GaussianSet,
    indices: Optional[Iterable[int] | np.ndarray] = None,
    bits: Optional[Mapping[str, int]] = None,
) -> QuantSpec:
    """Per-plane ranges computed on the selected Gaussians."""
    bits = {**DEFAULT_BITS, **(bits or {})}
    subset = gaussians if indices is None else gaussians.take(as_index_array(indices))
    if subset.count == 0:
        raise EmptySelectionError("cannot fit a quantization grid to an empty subset")
    planes = {
        name: fit_plane(values, bits[name])
        for name, values in zip(PLANE_NAMES, subset.planes())
    }
    return QuantSpec(planes=planes)


def quantize_planes(gaussians: GaussianSet, spec: QuantSpec) -> list[np.ndarray]:
    return [
        quantize_array(values, plane)
        for values, (_, plane) in zip(gaussians.planes(), spec.ordered())
    ]


def quantize_set(gaussians: GaussianSet, spec: QuantSpec) -> GaussianSet:
    """Snap every attribute onto the grid (quantize then dequantize)."""
    codes = quantize_planes(gaussians, spec)
    planes = [
        dequantize_array(plane_codes, plane)
        for plane_codes, (_, plane) in zip(codes, spec.ordered())
    ]
    return GaussianSet.from_planes(
        planes, gaussians.canvas_width, gaussians.canvas_height
    )
