"""Base Pydantic model for RAVE configuration values."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict


class RaveModel(BaseModel):
    """Shared configuration defaults.

    Configuration values are frozen so one instance can be handed to several
    render workers without copying.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)
