"""Continuous rate adaptation between anchor levels.

For a target byte rate R*, the anchor l = argmax{R(G_l) <= R*} is located,
the Gaussian count is interpolated linearly between G_l and G_{l+1}:

    |G*| = |G_l| + round_half_up((R* - R(G_l)) / (R(G_{l+1}) - R(G_l))
                                 * (|G_{l+1}| - |G_l|))

and the |G*| - |G_l| highest-scoring Gaussians of context C_{l+1} are added to
G_l. Context scores are cached on the hierarchy, so any number of rates can be
served with one scoring pass per anchor pair.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .codec.backends import DEFAULT_BACKEND, EntropyBackend
from .codec.bitstream import ANCHOR_INTERPOLATED, RateMeter, encode_subset
from .exceptions import (
    BudgetExceededError,
    InvalidInputError,
    InvalidRateTableError,
    RateBelowMinimumError,
)
from .hierarchy import AnchorHierarchy
from .importance import ScoreTable, rank_descending
from .models.loss import LossConfig
from .models.quant import QuantSpec
from .models.render import RenderConfig
from .models.report import RateReport, ScoringMode
from .splat.gaussians import GaussianSet, ImageBuffer

logger = logging.getLogger(__name__)

CLAMPED_BELOW = "below-minimum"
CLAMPED_ABOVE = "above-maximum"


@dataclass(frozen=True)
class RateTable:
    counts: tuple[int, ...]
    rates: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.counts) != len(self.rates) or not self.counts:
            raise InvalidRateTableError("rate table needs one rate per anchor count")
        if any(b <= a for a, b in zip(self.counts, self.counts[1:])):
            raise InvalidRateTableError("anchor counts must be strictly increasing")
        if any(r <= 0 for r in self.rates):
            raise InvalidRateTableError("anchor rates must be positive")

    @property
    def levels(self) -> int:
        return len(self.counts)

    def count(self, level: int) -> int:
        return self.counts[level - 1]

    def rate(self, level: int) -> int:
        return self.rates[level - 1]


@dataclass(frozen=True)
class AnchorLocation:
    level: int
    clamped: Optional[str] = None


def anchor_rates(
    gaussians: GaussianSet,
    hierarchy: AnchorHierarchy,
    spec: Optional[QuantSpec] = None,
    meter: Optional[RateMeter] = None,
) -> RateTable:
    """Measure R(G_l) for every anchor."""
    meter = meter or RateMeter()
    rates = [
        meter.measure(gaussians, hierarchy.level(level), spec)
        for level in range(1, hierarchy.levels + 1)
    ]
    table = RateTable(counts=tuple(hierarchy.sizes()), rates=tuple(rates))
    logger.info(f"Anchor rates (bytes): {list(table.rates)}")
    return table


def locate_anchor(
    table: RateTable, target_rate: int, clamp_below: bool = False
) -> AnchorLocation:
    """Largest level whose rate does not exceed the target."""
    if target_rate < table.rates[0]:
        if not clamp_below:
            raise RateBelowMinimumError(
                f"target {target_rate} B is below the lowest anchor "
                f"({table.rates[0]} B)"
            )
        return AnchorLocation(level=1, clamped=CLAMPED_BELOW)
    if target_rate > table.rates[-1]:
        logger.warning(
            f"Target {target_rate} B exceeds the highest anchor "
            f"({table.rates[-1]} B); clamping to level {table.levels}"
        )
        return AnchorLocation(level=table.levels, clamped=CLAMPED_ABOVE)
    level = max(
        lvl for lvl in range(1, table.levels + 1) if table.rate(lvl) <= target_rate
    )
    return AnchorLocation(level=level)


def _interpolate(
    count_lo: int, rate_lo: int, count_hi: int, rate_hi: int, target_rate: int
) -> int:
    span = rate_hi - rate_lo
    if span == 0:
        raise InvalidRateTableError(
            f"adjacent anchors share the rate {rate_lo} B; cannot interpolate"
        )
    step = Fraction(target_rate - rate_lo, span) * (count_hi - count_lo)
    count = count_lo + math.floor(step + Fraction(1, 2))
    return min(max(count, count_lo), count_hi)


def target_count(table: RateTable, level: int, target_rate: int) -> int:
    """Interpolated count with half-up rounding, kept inside [|G_l|, |G_{l+1}|]."""
    if not 1 <= level <= table.levels:
        raise InvalidInputError(f"level {level} outside [1, {table.levels}]")
    if level == table.levels:
        return table.count(level)
    return _interpolate(
        table.count(level),
        table.rate(level),
        table.count(level + 1),
        table.rate(level + 1),
        target_rate,
    )


def select_delta(context_table: ScoreTable, budget: int) -> np.ndarray:
    """The `budget` highest-scoring context indices, in rank order."""
    if budget < 0:
        raise InvalidInputError(f"budget must be non-negative, got {budget}")
    if budget > len(context_table):
        raise BudgetExceededError(
            f"budget {budget} exceeds the context size {len(context_table)}"
        )
    return rank_descending(context_table)[:budget]


@dataclass(frozen=True)
class EncodedRate:
    bitstream: bytes
    indices: np.ndarray
    report: RateReport


class RateController:
    """Serves bitstreams at arbitrary rates from one fine-tuned model."""

    def __init__(
        self,
        gaussians: GaussianSet,
        hierarchy: AnchorHierarchy,
        target: Optional[ImageBuffer] = None,
        *,
        loss: Optional[LossConfig] = None,
        render_config: Optional[RenderConfig] = None,
        quant_spec: Optional[QuantSpec] = None,
        backend: Optional[EntropyBackend] = DEFAULT_BACKEND,
        rate_table: Optional[RateTable] = None,
        meter: Optional[RateMeter] = None,
    ) -> None:
        if hierarchy.count != gaussians.count:
            raise InvalidInputError(
                f"hierarchy covers {hierarchy.count} Gaussians, model has "
                f"{gaussians.count}"
            )
        self.gaussians = gaussians
        self.hierarchy = hierarchy
        self.target = target
        self.loss = loss
        self.render_config = render_config
        self.quant_spec = quant_spec
        self.backend = backend
        self.meter = meter or RateMeter(backend)
        self._rate_table = rate_table

    @property
    def rate_table(self) -> RateTable:
        if self._rate_table is None:
            self._rate_table = anchor_rates(
                self.gaussians, self.hierarchy, self.quant_spec, self.meter
            )
        return self._rate_table

    def _ranked_context(self, level: int, mode: ScoringMode) -> ScoreTable:
        if self.target is None and (level, mode) not in self.hierarchy.cached_scores():
            raise InvalidInputError(
                f"scores for context C_{level} ({mode}) are not cached and no target "
                "image was given to compute them"
            )
        return self.hierarchy.context_scores(
            level, self.gaussians, self.target, self.loss, mode, self.render_config
        )

    def select(
        self, count: int, level: int, mode: ScoringMode = "local"
    ) -> np.ndarray:
        """G_l plus the top (count - |G_l|) Gaussians of C_{l+1}."""
        base = self.hierarchy.level(level)
        budget = count - base.size
        if budget == 0:
            return base
        delta = select_delta(self._ranked_context(level + 1, mode), budget)
        return np.sort(np.concatenate([base, delta]))

    def _encode(self, indices: np.ndarray, level: int) -> bytes:
        sizes = self.hierarchy.sizes()
        if indices.size == sizes[level - 1]:
            anchor = level
        elif level < len(sizes) and indices.size == sizes[level]:
            anchor = level + 1
        else:
            anchor = ANCHOR_INTERPOLATED
        return encode_subset(
            self.gaussians,
            indices,
            self.quant_spec,
            anchor_level=anchor,
            backend=self.backend,
        )

    def encode_level(self, level: int) -> EncodedRate:
        indices = self.hierarchy.level(level)
        bitstream = self._encode(indices, level)
        report = RateReport(
            target_rate_bytes=self.rate_table.rate(level),
            achieved_rate_bytes=len(bitstream),
            level=level,
            count=int(indices.size),
        )
        return EncodedRate(bitstream=bitstream, indices=indices, report=report)

    def _corrected_count(
        self, level: int, count: int, achieved: int, target_rate: int
    ) -> Optional[int]:
        """Re-interpolate on the side of the achieved sample that holds the target.

        Returns None when no correction applies (anchor endpoint, exact hit or a
        flat segment).
        """
        table = self.rate_table
        if level == table.levels or achieved == target_rate:
            return None
        if not table.count(level) < count < table.count(level + 1):
            return None
        if achieved < target_rate:
            lo = (count, achieved)
            hi = (table.count(level + 1), table.rate(level + 1))
        else:
            lo = (table.count(level), table.rate(level))
            hi = (count, achieved)
        if hi[1] == lo[1]:
            return None
        return _interpolate(lo[0], lo[1], hi[0], hi[1], target_rate)

    def encode_at_rate(
        self,
        target_rate: int,
        mode: ScoringMode = "local",
        *,
        clamp_below: bool = False,
        correct: bool = False,
    ) -> EncodedRate:
        """Encode the interpolated subset for `target_rate` bytes.

        The achieved size is reported, not forced: the linear count estimate
        ignores the entropy coder's nonlinearity. `correct=True` re-interpolates
        once using the achieved size as an extra sample.
        """
        table = self.rate_table
        location = locate_anchor(table, target_rate, clamp_below=clamp_below)
        level = location.level
        count = (
            table.count(level)
            if location.clamped
            else target_count(table, level, target_rate)
        )
        indices = self.select(count, level, mode)
        bitstream = self._encode(indices, level)
        corrected = False

        if correct and not location.clamped:
            revised = self._corrected_count(level, count, len(bitstream), target_rate)
            if revised is not None:
                corrected = True
                if revised != count:
                    indices = self.select(revised, level, mode)
                    bitstream = self._encode(indices, level)

        achieved = len(bitstream)
        report = RateReport(
            target_rate_bytes=target_rate,
            achieved_rate_bytes=achieved,
            level=level,
            count=int(indices.size),
            mode=mode,
            clamped=location.clamped,
            corrected=corrected,
        )
        logger.info(
            f"Encoded {report.count} Gaussians at level {level} ({mode}): "
            f"target {target_rate} B, achieved {achieved} B"
        )
        return EncodedRate(bitstream=bitstream, indices=indices, report=report)


def encode_at_rate(
    gaussians: GaussianSet,
    hierarchy: AnchorHierarchy,
    target_rate: int,
    mode: ScoringMode = "local",
    *,
    target: ImageBuffer,
    loss: Optional[LossConfig] = None,
    render_config: Optional[RenderConfig] = None,
    quant_spec: Optional[QuantSpec] = None,
    rate_table: Optional[RateTable] = None,
    clamp_below: bool = False,
) -> EncodedRate:
    """One-shot wrapper around `RateController.encode_at_rate`."""
    controller = RateController(
        gaussians,
        hierarchy,
        target,
        loss=loss,
        render_config=render_config,
        quant_spec=quant_spec,
        rate_table=rate_table,
    )
    return controller.encode_at_rate(target_rate, mode, clamp_below=clamp_below)


def evenly_spaced_targets(low: int, high: int, points: int) -> list[int]:
    """`points` integer rates from low to high inclusive (half-up rounding)."""
    if points < 1:
        raise InvalidInputError("at least one target rate is required")
    if points == 1:
        return [low]
    return [
        low + math.floor(Fraction((high - low) * k, points - 1) + Fraction(1, 2))
        for k in range(points)
    ]


def segment_targets(table: RateTable, per_segment: int) -> list[int]:
    """`per_segment` rates inside every adjacent anchor pair, endpoints included."""
    targets: list[int] = []
    for level in range(1, table.levels):
        segment = evenly_spaced_targets(
            table.rate(level), table.rate(level + 1), per_segment
        )
        targets.extend(segment if not targets else segment[1:])
    return targets or [table.rate(1)]


def sorted_unique(values: Sequence[int]) -> list[int]:
    return sorted(set(values))
