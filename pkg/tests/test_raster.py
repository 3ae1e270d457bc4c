"""Tests for Gaussian primitives, rendering and the analytic backward pass."""

from __future__ import annotations

import math

import numpy as np
import pytest

from rave.exceptions import InvalidInputError, InvalidParameterError
from rave.models.render import RenderConfig
from rave.splat.gaussians import TRAINABLE, Gaussian2D, GaussianSet
from rave.splat.raster import (
    covariance_from_params,
    eval_gaussian,
    rasterize,
    render,
    render_backward,
)

# wide cutoff keeps truncation jumps far below finite-difference resolution
FD_CONFIG = RenderConfig(cutoff_radius_sigmas=8.0)
FD_STEP = 1e-5


def _single(
    pos, color, opacity_logit=20.0, log_scale=(5.0, 5.0), depth=0.0
) -> Gaussian2D:
    return Gaussian2D(
        pos=np.array(pos, dtype=np.float64),
        log_scale=np.array(log_scale, dtype=np.float64),
        rotation=0.0,
        opacity_logit=opacity_logit,
        color=np.array(color, dtype=np.float64),
        depth_key=depth,
    )


def test_should_return_identity_when_isotropic_unit_scale_is_rotated() -> None:
    cov = covariance_from_params(np.zeros(2), 0.7)

    np.testing.assert_allclose(cov.sigma, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(cov.inverse, np.eye(2), atol=1e-12)
    assert cov.det == pytest.approx(1.0)


def test_should_scale_axes_when_log_scale_is_anisotropic() -> None:
    axis_aligned = covariance_from_params(np.array([math.log(2.0), 0.0]), 0.0)
    quarter_turn = covariance_from_params(np.array([math.log(2.0), 0.0]), math.pi / 2)

    np.testing.assert_allclose(axis_aligned.sigma, np.diag([4.0, 1.0]), atol=1e-12)
    np.testing.assert_allclose(quarter_turn.sigma, np.diag([1.0, 4.0]), atol=1e-12)
    assert quarter_turn.det == pytest.approx(4.0)


def test_should_produce_symmetric_positive_definite_covariance() -> None:
    cov = covariance_from_params(np.array([0.3, -1.1]), 2.3)

    np.testing.assert_array_equal(cov.sigma, cov.sigma.T)
    assert np.all(np.linalg.eigvalsh(cov.sigma) > 0.0)
    np.testing.assert_allclose(cov.sigma @ cov.inverse, np.eye(2), atol=1e-12)


def test_should_raise_invalid_parameter_when_input_is_not_finite() -> None:
    with pytest.raises(InvalidParameterError):
        covariance_from_params(np.array([np.nan, 0.0]), 0.0)
    with pytest.raises(InvalidParameterError):
        covariance_from_params(np.zeros(2), math.inf)


def test_should_evaluate_gaussian_examples() -> None:
    unit = _single((3.0, 4.0), (1, 1, 1), log_scale=(0.0, 0.0))
    stretched = _single((0.0, 0.0), (1, 1, 1), log_scale=(math.log(2.0), 0.0))

    assert eval_gaussian(unit, np.array([3.0, 4.0])) == 1.0
    assert eval_gaussian(unit, np.array([4.0, 4.0])) == pytest.approx(math.exp(-0.5))
    assert eval_gaussian(stretched, np.array([2.0, 0.0])) == pytest.approx(
        math.exp(-0.5)
    )


def test_should_be_invariant_when_offset_and_covariance_rotate_together() -> None:
    base = Gaussian2D(
        pos=np.zeros(2),
        log_scale=np.array([0.4, -0.3]),
        rotation=0.2,
        opacity_logit=0.0,
        color=np.zeros(3),
    )
    turned = Gaussian2D(
        pos=np.zeros(2),
        log_scale=base.log_scale,
        rotation=0.2 + 1.1,
        opacity_logit=0.0,
        color=np.zeros(3),
    )
    c, s = math.cos(1.1), math.sin(1.1)
    offset = np.array([0.9, -0.4])
    rotated = np.array([[c, -s], [s, c]]) @ offset

    assert eval_gaussian(turned, rotated) == pytest.approx(eval_gaussian(base, offset))


def test_should_render_background_when_set_is_empty() -> None:
    empty = GaussianSet.empty(5, 3)

    image = render(empty, RenderConfig(background=(0.2, 0.4, 0.6)))

    assert image.pixels.shape == (3, 5, 3)
    expected = np.broadcast_to((0.2, 0.4, 0.6), (3, 5, 3))
    np.testing.assert_allclose(image.pixels, expected)


def test_should_clamp_alpha_when_single_opaque_gaussian_covers_pixel() -> None:
    gaussians = GaussianSet.from_gaussians([_single((1.5, 1.5), (1, 0, 0))], 4, 4)

    image = render(gaussians)

    np.testing.assert_allclose(image.pixels[1, 1], (0.999, 0.0, 0.0), atol=1e-12)


def test_should_composite_front_to_back_when_gaussians_coincide() -> None:
    front = _single((1.5, 1.5), (1, 0, 0), opacity_logit=0.0, depth=0.0)
    back = _single((1.5, 1.5), (0, 0, 1), opacity_logit=20.0, depth=1.0)
    # storage order reversed on purpose: depth_key decides
    gaussians = GaussianSet.from_gaussians([back, front], 4, 4)

    image = render(gaussians)

    np.testing.assert_allclose(image.pixels[1, 1], (0.5, 0.0, 0.4995), atol=1e-12)


def test_should_break_depth_ties_by_index() -> None:
    first = _single((1.5, 1.5), (1, 0, 0), opacity_logit=0.0, depth=0.0)
    second = _single((1.5, 1.5), (0, 1, 0), opacity_logit=0.0, depth=0.0)

    image = render(GaussianSet.from_gaussians([first, second], 4, 4))

    np.testing.assert_allclose(image.pixels[1, 1], (0.5, 0.25, 0.0), atol=1e-12)


def test_should_keep_pixels_in_unit_range(make_gaussians) -> None:
    gaussians = make_gaussians(30, 16, 16, seed=5, opacity_logit_range=(0.0, 6.0))

    image = render(gaussians, RenderConfig(background=(1.0, 1.0, 1.0)))

    assert image.pixels.min() >= 0.0
    assert image.pixels.max() <= 1.0 + 1e-12


def test_should_render_identically_when_storage_order_is_permuted(
    make_gaussians,
) -> None:
    gaussians = make_gaussians(12, 16, 16, seed=3)
    perm = np.random.default_rng(0).permutation(12)
    shuffled = gaussians.with_attributes(
        pos=gaussians.pos[perm],
        log_scale=gaussians.log_scale[perm],
        rotation=gaussians.rotation[perm],
        opacity_logit=gaussians.opacity_logit[perm],
        color=gaussians.color[perm],
        depth_key=gaussians.depth_key[perm],
    )

    np.testing.assert_allclose(
        render(gaussians).pixels, render(shuffled).pixels, rtol=0, atol=1e-13
    )


def test_should_be_bit_identical_for_any_thread_count(make_gaussians) -> None:
    gaussians = make_gaussians(20, 24, 40, seed=8)
    upstream = np.random.default_rng(2).normal(size=(40, 24, 3))

    serial = rasterize(gaussians, RenderConfig(threads=1, band_rows=8))
    parallel = rasterize(gaussians, RenderConfig(threads=4, band_rows=8))
    grads_serial = serial.backward(upstream)
    grads_parallel = parallel.backward(upstream)

    np.testing.assert_array_equal(serial.image.pixels, parallel.image.pixels)
    for name in TRAINABLE:
        np.testing.assert_array_equal(
            getattr(grads_serial, name), getattr(grads_parallel, name)
        )


def test_should_return_zero_gradients_when_gaussian_is_off_canvas(
    make_gaussians,
) -> None:
    gaussians = make_gaussians(3, 8, 8, seed=1)
    pos = gaussians.pos.copy()
    pos[0] = (200.0, -150.0)
    moved = gaussians.with_attributes(pos=pos)
    upstream = np.ones((8, 8, 3))

    grads = render_backward(moved, RenderConfig(), upstream)

    for name in TRAINABLE:
        assert np.all(getattr(grads, name)[0] == 0.0)


def test_should_return_zero_gradients_when_upstream_is_zero(make_gaussians) -> None:
    gaussians = make_gaussians(4, 8, 8, seed=2)

    grads = render_backward(gaussians, RenderConfig(), np.zeros((8, 8, 3)))

    assert np.all(grads.flat() == 0.0)


def test_should_raise_invalid_input_when_upstream_shape_mismatches(
    make_gaussians,
) -> None:
    gaussians = make_gaussians(2, 8, 8)

    with pytest.raises(InvalidInputError):
        render_backward(gaussians, RenderConfig(), np.zeros((8, 7, 3)))


def _weighted_sum(gaussians: GaussianSet, weights: np.ndarray) -> float:
    return float(np.sum(render(gaussians, FD_CONFIG).pixels * weights))


def _finite_difference(
    gaussians: GaussianSet, weights: np.ndarray, name: str
) -> np.ndarray:
    values = getattr(gaussians, name)
    grad = np.zeros_like(values)
    for idx in np.ndindex(values.shape):
        plus, minus = values.copy(), values.copy()
        plus[idx] += FD_STEP
        minus[idx] -= FD_STEP
        f_plus = _weighted_sum(gaussians.with_attributes(**{name: plus}), weights)
        f_minus = _weighted_sum(gaussians.with_attributes(**{name: minus}), weights)
        grad[idx] = (f_plus - f_minus) / (2.0 * FD_STEP)
    return grad


@pytest.mark.parametrize(
    ("count", "width", "height", "seed"),
    [(3, 8, 8, 11), (10, 16, 16, 12), (6, 16, 9, 13)],
)
def test_should_match_finite_differences_for_every_parameter(
    make_gaussians, count, width, height, seed
) -> None:
    # Arrange
    gaussians = make_gaussians(count, width, height, seed=seed)
    weights = np.random.default_rng(seed).normal(size=(height, width, 3))

    # Act
    analytic = render_backward(gaussians, FD_CONFIG, weights)

    # Assert
    for name in TRAINABLE:
        numeric = _finite_difference(gaussians, weights, name)
        np.testing.assert_allclose(
            getattr(analytic, name), numeric, rtol=1e-4, atol=1e-7, err_msg=name
        )


def test_should_take_subset_in_ascending_order(make_gaussians) -> None:
    gaussians = make_gaussians(6, 8, 8)

    subset = gaussians.take([4, 1, 4])

    assert subset.count == 2
    np.testing.assert_array_equal(subset.pos, gaussians.pos[[1, 4]])


def test_should_raise_invalid_input_when_subset_is_out_of_range(make_gaussians) -> None:
    gaussians = make_gaussians(3, 8, 8)

    with pytest.raises(InvalidInputError):
        gaussians.take([0, 3])


def test_should_reject_mismatched_attribute_lengths() -> None:
    with pytest.raises(InvalidParameterError):
        GaussianSet(
            pos=np.zeros((2, 2)),
            log_scale=np.zeros((2, 2)),
            rotation=np.zeros(3),
            opacity_logit=np.zeros(2),
            color=np.zeros((2, 3)),
            depth_key=np.zeros(2),
            canvas_width=4,
            canvas_height=4,
        )
