"""Anchor level specification."""

from __future__ import annotations

from pydantic import field_validator

from .base import RaveModel


class LevelSpec(RaveModel):
    """Fraction of Gaussians retained at each anchor, lowest rate first."""

    fractions: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0)

    @field_validator("fractions")
    @classmethod
    def _ascending_to_one(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not value:
            raise ValueError("at least one anchor level is required")
        if any(not 0.0 < f <= 1.0 for f in value):
            raise ValueError("fractions must lie in (0, 1]")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("fractions must be strictly ascending")
        if value[-1] != 1.0:
            raise ValueError("the last fraction must be exactly 1.0")
        return value

    @property
    def levels(self) -> int:
        return len(self.fractions)

    @classmethod
    def uniform(cls, levels: int) -> "LevelSpec":
        """Evenly spaced anchors k/levels for k = 1..levels."""
        if levels < 1:
            raise ValueError("levels must be >= 1")
        return cls(fractions=tuple(k / levels for k in range(1, levels)) + (1.0,))
