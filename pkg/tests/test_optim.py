"""Tests for the per-row Adam optimizer."""

from __future__ import annotations

import numpy as np
import pytest

from rave.models.train import AdamSettings
from rave.training.optim import Adam, decayed_rates, expon_lr


def test_should_move_by_learning_rate_on_first_step() -> None:
    # Arrange
    params = {"w": np.array([1.0, 2.0, 3.0])}
    adam = Adam(params, {"w": 0.1})

    # Act
    adam.step(params, {"w": np.array([4.0, -0.5, 0.0])})

    # Assert
    np.testing.assert_allclose(params["w"], [0.9, 2.1, 3.0], atol=1e-6)
    np.testing.assert_array_equal(adam.steps, [1, 1, 1])


def test_should_leave_unselected_rows_and_moments_untouched() -> None:
    params = {"w": np.ones((4, 2))}
    adam = Adam(params, {"w": 0.01}, AdamSettings())
    grads = {"w": np.full((4, 2), 2.0)}

    adam.step(params, grads, rows=np.array([1, 3]))

    np.testing.assert_array_equal(params["w"][[0, 2]], np.ones((2, 2)))
    assert np.all(params["w"][[1, 3]] < 1.0)
    np.testing.assert_array_equal(adam.m["w"][[0, 2]], 0.0)
    np.testing.assert_array_equal(adam.steps, [0, 1, 0, 1])


def test_should_bias_correct_each_row_by_its_own_step_count() -> None:
    params = {"w": np.zeros(2)}
    adam = Adam(params, {"w": 0.1})
    grads = {"w": np.ones(2)}
    adam.step(params, grads, rows=np.array([0]))
    adam.step(params, grads, rows=np.array([0]))

    adam.step(params, grads, rows=np.array([1]))

    # a row's first update has the same size no matter when it happens
    assert params["w"][1] == pytest.approx(-0.1, abs=1e-6)
    assert params["w"][0] == pytest.approx(-0.2, abs=1e-6)


def test_should_ignore_empty_row_selection() -> None:
    params = {"w": np.ones(3)}
    adam = Adam(params, {"w": 0.1})

    adam.step(params, {"w": np.ones(3)}, rows=np.array([], dtype=np.int64))

    np.testing.assert_array_equal(params["w"], np.ones(3))
    np.testing.assert_array_equal(adam.steps, [0, 0, 0])


def test_should_decay_log_linearly_between_initial_and_final_rate() -> None:
    assert expon_lr(0, 0.1, 0.001, 100) == pytest.approx(0.1)
    assert expon_lr(50, 0.1, 0.001, 100) == pytest.approx(0.01)
    assert expon_lr(100, 0.1, 0.001, 100) == pytest.approx(0.001)
    assert expon_lr(250, 0.1, 0.001, 100) == pytest.approx(0.001)


def test_should_keep_rates_constant_when_final_factor_is_one() -> None:
    base = {"pos": 0.05, "color": 0.01}

    rates = [decayed_rates(base, 1.0, step, 20) for step in range(21)]

    for scheduled in rates:
        assert scheduled == pytest.approx(base)


def test_should_restore_moments_and_step_counts_from_a_snapshot() -> None:
    # Arrange
    params = {"w": np.zeros(3)}
    adam = Adam(params, {"w": 0.1})
    adam.step(params, {"w": np.ones(3)})
    state = adam.snapshot()

    # Act
    adam.step(params, {"w": np.full(3, -2.0)}, rows=np.array([0, 2]))
    adam.restore(state)

    # Assert
    np.testing.assert_array_equal(adam.steps, [1, 1, 1])
    np.testing.assert_allclose(adam.m["w"], np.full(3, 0.1))
    np.testing.assert_allclose(adam.v["w"], np.full(3, 0.001))
