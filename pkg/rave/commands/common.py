"""Helpers shared by the command modules."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from ..codec.checkpoint import Checkpoint, decode_checkpoint
from ..exceptions import InvalidConfigError, InvalidInputError
from ..hierarchy import AnchorHierarchy
from ..repositories.base import ArtifactRepository
from ..repositories.files import FileArtifactRepository

repository: ArtifactRepository = FileArtifactRepository()

NO_HIERARCHY_MSG = "model has no anchor hierarchy; run 'rave pipeline' first"


def load_checkpoint(path: Path) -> Checkpoint:
    return decode_checkpoint(repository.read_bytes(path))


def require_hierarchy(checkpoint: Checkpoint) -> AnchorHierarchy:
    if checkpoint.hierarchy is None:
        raise InvalidInputError(NO_HIERARCHY_MSG)
    return checkpoint.hierarchy


def parse_floats(raw: str, option: str) -> tuple[float, ...]:
    """Comma-separated floats, e.g. '0.2,0.4,1.0'."""
    try:
        return tuple(float(part) for part in raw.split(",") if part.strip())
    except ValueError:
        raise InvalidConfigError(f"{option} expects comma-separated numbers") from None


def parse_ints(raw: Optional[str], option: str) -> list[int]:
    if raw is None:
        return []
    try:
        values = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise InvalidConfigError(f"{option} expects comma-separated integers") from None
    if any(v < 0 for v in values):
        raise InvalidConfigError(f"{option} values must be non-negative")
    return values


def output_path(path: Path) -> Path:
    """Ask before replacing an existing file (skipped with --yes)."""
    from ..confirmation import confirm_overwrite

    confirm_overwrite(path)
    return path

