"""Tests for the nested anchor hierarchy and its context score cache."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from pydantic import ValidationError

from rave.exceptions import InvalidInputError, InvalidSpecError
from rave.hierarchy import (
    AnchorHierarchy,
    anchor_counts,
    build_hierarchy,
    hierarchy_from_ranking,
)
from rave.importance import ScoreTable, rank_descending
from rave.models.hierarchy import LevelSpec
from rave.splat.gaussians import Gaussian2D, GaussianSet


def _random_spec(rng: np.random.Generator, count: int) -> LevelSpec:
    levels = int(rng.integers(1, min(count, 8) + 1))
    sizes = np.sort(rng.choice(np.arange(1, count), size=levels - 1, replace=False))
    return LevelSpec(fractions=tuple(int(s) / count for s in sizes) + (1.0,))


def _occlusion_scene() -> GaussianSet:
    def gaussian(pos, log_scale, opacity_logit, color, depth) -> Gaussian2D:
        return Gaussian2D(
            pos=np.array(pos, dtype=np.float64),
            log_scale=np.array(log_scale, dtype=np.float64),
            rotation=0.0,
            opacity_logit=opacity_logit,
            color=np.array(color, dtype=np.float64),
            depth_key=depth,
        )

    return GaussianSet.from_gaussians(
        [
            gaussian((2.0, 2.0), (0.3, 0.3), 0.0, (0.2, 0.7, 0.2), 2.0),
            gaussian((8.0, 8.0), (0.8, 0.6), 0.5, (0.9, 0.3, 0.1), 1.0),
            # opaque cover over the whole canvas, in front of everything
            gaussian((8.0, 8.0), (3.0, 3.0), 20.0, (0.1, 0.1, 0.6), 0.0),
        ],
        16,
        16,
    )


def test_should_place_everything_in_one_context_when_single_level(
    make_gaussians, make_image
) -> None:
    gaussians = make_gaussians(7, 16, 16)

    hierarchy = build_hierarchy(
        gaussians, LevelSpec(fractions=(1.0,)), make_image(16, 16)
    )

    assert hierarchy.levels == 1
    assert hierarchy.context(1).tolist() == list(range(7))
    assert hierarchy.scoring_passes == 1


def test_should_keep_top_half_when_scores_descend_by_index() -> None:
    table = ScoreTable.from_mapping({i: float(10 - i) for i in range(10)})

    hierarchy = hierarchy_from_ranking(
        rank_descending(table), LevelSpec(fractions=(0.5, 1.0)), 10
    )

    assert hierarchy.level(1).tolist() == [0, 1, 2, 3, 4]
    assert hierarchy.context(2).tolist() == [5, 6, 7, 8, 9]


def test_should_hold_set_algebra_when_specs_are_random() -> None:
    rng = np.random.default_rng(42)
    for _ in range(100):
        # Arrange
        count = int(rng.integers(2, 200))
        spec = _random_spec(rng, count)
        ranking = rng.permutation(count)

        # Act
        hierarchy = hierarchy_from_ranking(ranking, spec, count)

        # Assert
        sizes = anchor_counts(spec.fractions, count)
        assert hierarchy.sizes() == sizes
        assert sum(c.size for c in hierarchy.contexts) == count
        union: set[int] = set()
        for level in range(1, hierarchy.levels + 1):
            context = set(hierarchy.context(level).tolist())
            assert context and not context & union
            union |= context
            assert set(hierarchy.level(level).tolist()) == union
            assert set(hierarchy.level(level).tolist()) == set(
                ranking[: sizes[level - 1]].tolist()
            )
        assert union == set(range(count))


def test_should_round_counts_up_for_fractional_anchors() -> None:
    assert anchor_counts((0.2, 0.4, 0.6, 0.8, 1.0), 1001) == [201, 401, 601, 801, 1001]
    assert anchor_counts((0.1, 0.3, 1.0), 10) == [1, 3, 10]


def test_should_raise_invalid_spec_when_a_context_would_be_empty() -> None:
    with pytest.raises(InvalidSpecError):
        hierarchy_from_ranking(np.arange(3), LevelSpec(fractions=(0.5, 0.6, 1.0)), 3)


def test_should_raise_invalid_spec_when_model_has_fewer_gaussians_than_levels(
    make_gaussians, make_image
) -> None:
    with pytest.raises(InvalidSpecError):
        build_hierarchy(make_gaussians(3, 16, 16), LevelSpec(), make_image(16, 16))


@pytest.mark.parametrize(
    "fractions", [(), (0.5,), (0.4, 0.4, 1.0), (0.6, 0.3, 1.0), (0.0, 1.0)]
)
def test_should_reject_malformed_level_spec(fractions) -> None:
    with pytest.raises(ValidationError):
        LevelSpec(fractions=fractions)


def test_should_space_uniform_levels_evenly() -> None:
    assert LevelSpec.uniform(4).fractions == (0.25, 0.5, 0.75, 1.0)
    assert LevelSpec.uniform(1).fractions == (1.0,)


def test_should_reject_overlapping_contexts() -> None:
    with pytest.raises(InvalidSpecError):
        AnchorHierarchy([np.array([0, 1]), np.array([1, 2])], 3)
    with pytest.raises(InvalidSpecError):
        AnchorHierarchy([np.array([0]), np.array([2])], 3)


def test_should_build_identically_when_inputs_repeat(make_gaussians, toy_image) -> None:
    gaussians = make_gaussians(30, 64, 64, seed=3)

    first = build_hierarchy(gaussians, LevelSpec(), toy_image)
    second = build_hierarchy(gaussians, LevelSpec(), toy_image)

    for a, b in zip(first.contexts, second.contexts):
        np.testing.assert_array_equal(a, b)


def test_should_score_higher_locally_when_context_is_occluded_in_full_model(
    make_image,
) -> None:
    # Arrange
    gaussians = _occlusion_scene()
    target = make_image(16, 16, seed=9)
    hierarchy = hierarchy_from_ranking(
        np.array([0, 1, 2]), LevelSpec(fractions=(1 / 3, 2 / 3, 1.0)), 3
    )

    # Act
    local = hierarchy.context_scores(2, gaussians, target, mode="local")
    global_ = hierarchy.context_scores(2, gaussians, target, mode="global")

    # Assert
    assert len(local) == 1
    assert local.provenance == "level=2;mode=local"
    assert local.score_of(1) > global_.score_of(1) > 0.0


def test_should_return_cached_table_when_key_repeats(
    make_gaussians, make_image
) -> None:
    gaussians = make_gaussians(10, 16, 16)
    target = make_image(16, 16)
    hierarchy = hierarchy_from_ranking(np.arange(10), LevelSpec.uniform(2), 10)

    first = hierarchy.context_scores(2, gaussians, target)
    second = hierarchy.context_scores(2, gaussians, target)

    assert second is first
    assert hierarchy.scoring_passes == 1
    assert set(hierarchy.cached_scores()) == {(2, "local")}


def test_should_score_once_when_threads_race_for_same_context(
    make_gaussians, make_image
) -> None:
    gaussians = make_gaussians(12, 16, 16)
    target = make_image(16, 16)
    hierarchy = hierarchy_from_ranking(np.arange(12), LevelSpec.uniform(3), 12)

    with ThreadPoolExecutor(max_workers=4) as pool:
        tables = list(
            pool.map(
                lambda _: hierarchy.context_scores(3, gaussians, target), range(8)
            )
        )

    assert all(table is tables[0] for table in tables)
    assert hierarchy.scoring_passes == 1


@pytest.mark.parametrize("level", [1, 4])
def test_should_raise_invalid_input_when_context_level_is_out_of_range(
    make_gaussians, make_image, level
) -> None:
    hierarchy = hierarchy_from_ranking(np.arange(9), LevelSpec.uniform(3), 9)

    with pytest.raises(InvalidInputError):
        hierarchy.context_scores(level, make_gaussians(9, 16, 16), make_image(16, 16))


def test_should_raise_invalid_input_when_scoring_mode_is_unknown(
    make_gaussians, make_image
) -> None:
    hierarchy = hierarchy_from_ranking(np.arange(4), LevelSpec.uniform(2), 4)

    with pytest.raises(InvalidInputError):
        hierarchy.context_scores(
            2, make_gaussians(4, 16, 16), make_image(16, 16), mode="sideways"
        )
