"""Nested anchor hierarchy G_1 ⊂ G_2 ⊂ ... ⊂ G_L.

Anchors are built from one global gradient ranking: G_l keeps the top
ceil(fraction_l * count) Gaussians and the context C_l = G_l \\ G_{l-1} holds
the Gaussians added at level l. Levels are numbered from 1.
"""

from __future__ import annotations

import logging
import math
import threading
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .exceptions import InvalidInputError, InvalidSpecError
from .importance import ScoreTable, rank_descending, score_gaussians
from .models.hierarchy import LevelSpec
from .models.loss import LossConfig
from .models.render import RenderConfig
from .models.report import ScoringMode
from .splat.gaussians import GaussianSet, ImageBuffer

logger = logging.getLogger(__name__)

SCORING_MODES: tuple[str, ...] = ("local", "global")


class AnchorHierarchy:
    """Disjoint contexts plus a per-(level, mode) cache of context scores."""

    def __init__(
        self,
        contexts: Sequence[np.ndarray],
        count: int,
        fractions: Optional[Sequence[float]] = None,
    ) -> None:
        if not contexts:
            raise InvalidSpecError("a hierarchy needs at least one level")
        self.contexts = [np.sort(np.asarray(c, dtype=np.int64)) for c in contexts]
        self.count = count
        if fractions is None:
            sizes = np.cumsum([c.size for c in self.contexts])
            fractions = [float(s) / count for s in sizes]
        self.fractions = tuple(float(f) for f in fractions)
        self._validate()
        self.scoring_passes = 0
        self._scores: dict[tuple[int, str], ScoreTable] = {}
        self._cache_lock = threading.Lock()
        self._key_locks: dict[tuple[int, str], threading.Lock] = {}

    def _validate(self) -> None:
        if len(self.fractions) != len(self.contexts):
            raise InvalidSpecError("one fraction per level is required")
        if any(c.size == 0 for c in self.contexts):
            raise InvalidSpecError("every context must hold at least one Gaussian")
        merged = np.concatenate(self.contexts)
        if merged.size != self.count or not np.array_equal(
            np.sort(merged), np.arange(self.count)
        ):
            raise InvalidSpecError(
                "contexts must be disjoint and cover every Gaussian exactly once"
            )

    @property
    def levels(self) -> int:
        return len(self.contexts)

    def _check_level(self, level: int) -> None:
        if not 1 <= level <= self.levels:
            raise InvalidInputError(f"level {level} outside [1, {self.levels}]")

    def context(self, level: int) -> np.ndarray:
        self._check_level(level)
        return self.contexts[level - 1]

    def level(self, level: int) -> np.ndarray:
        """G_l as an ascending index array."""
        self._check_level(level)
        return np.sort(np.concatenate(self.contexts[:level]))

    def level_size(self, level: int) -> int:
        self._check_level(level)
        return int(sum(c.size for c in self.contexts[:level]))

    def sizes(self) -> list[int]:
        return [self.level_size(level) for level in range(1, self.levels + 1)]

    def cached_scores(self) -> dict[tuple[int, str], ScoreTable]:
        with self._cache_lock:
            return dict(self._scores)

    def store_scores(self, level: int, mode: str, table: ScoreTable) -> None:
        self._check_level(level)
        with self._cache_lock:
            self._scores[(level, mode)] = table

    def _lock_for(self, key: tuple[int, str]) -> threading.Lock:
        with self._cache_lock:
            return self._key_locks.setdefault(key, threading.Lock())

    def context_scores(
        self,
        level: int,
        gaussians: GaussianSet,
        target: ImageBuffer,
        loss: Optional[LossConfig] = None,
        mode: ScoringMode = "local",
        render_config: Optional[RenderConfig] = None,
    ) -> ScoreTable:
        """Scores of C_l, rendering G_l (local) or the full model (global)."""
        if not 2 <= level <= self.levels:
            raise InvalidInputError(
                f"context scores need a level in [2, {self.levels}], got {level}"
            )
        if mode not in SCORING_MODES:
            raise InvalidInputError(f"unknown scoring mode '{mode}'")
        key = (level, mode)
        with self._cache_lock:
            cached = self._scores.get(key)
        if cached is not None:
            return cached
        with self._lock_for(key):
            with self._cache_lock:
                cached = self._scores.get(key)
            if cached is not None:
                return cached
            render_subset = (
                self.level(level) if mode == "local" else self.level(self.levels)
            )
            table = score_gaussians(
                gaussians,
                render_subset,
                self.context(level),
                target,
                loss,
                render_config,
                provenance=f"level={level};mode={mode}",
            )
            with self._cache_lock:
                self._scores[key] = table
                self.scoring_passes += 1
            logger.info(
                f"Scored context C_{level} ({table.indices.size} Gaussians, "
                f"{mode} rendering of {render_subset.size})"
            )
            return table


def anchor_counts(fractions: Sequence[float], count: int) -> list[int]:
    """ceil(fraction * count) per level, immune to binary rounding of fractions."""
    return [
        math.ceil(Fraction(f).limit_denominator(10**6) * count) for f in fractions
    ]


def build_hierarchy(
    gaussians: GaussianSet,
    spec: LevelSpec,
    target: ImageBuffer,
    loss: Optional[LossConfig] = None,
    render_config: Optional[RenderConfig] = None,
) -> AnchorHierarchy:
    """Rank every Gaussian once on the full model and cut nested anchors."""
    count = gaussians.count
    if count < spec.levels:
        raise InvalidSpecError(
            f"{spec.levels} levels need at least {spec.levels} Gaussians, have {count}"
        )
    table = score_gaussians(
        gaussians,
        np.arange(count),
        np.arange(count),
        target,
        loss,
        render_config,
        provenance="level=all;mode=global",
    )
    return hierarchy_from_ranking(rank_descending(table), spec, count, passes=1)


def hierarchy_from_ranking(
    ranking: np.ndarray, spec: LevelSpec, count: int, passes: int = 0
) -> AnchorHierarchy:
    sizes = anchor_counts(spec.fractions, count)
    contexts = []
    previous = 0
    for level, size in enumerate(sizes, start=1):
        if size <= previous:
            raise InvalidSpecError(
                f"fraction {spec.fractions[level - 1]} leaves context C_{level} empty "
                f"for {count} Gaussians"
            )
        contexts.append(ranking[previous:size])
        previous = size
    hierarchy = AnchorHierarchy(contexts, count, spec.fractions)
    hierarchy.scoring_passes = passes
    logger.info(f"Built {spec.levels}-level hierarchy with anchor sizes {sizes}")
    return hierarchy


def context_scores(
    hierarchy: AnchorHierarchy,
    level: int,
    gaussians: GaussianSet,
    target: ImageBuffer,
    loss: Optional[LossConfig] = None,
    mode: ScoringMode = "local",
    render_config: Optional[RenderConfig] = None,
) -> ScoreTable:
    return hierarchy.context_scores(level, gaussians, target, loss, mode, render_config)
