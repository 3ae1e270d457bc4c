"""Repository abstraction for artifact storage.

Commands talk to this protocol; `FileArtifactRepository` is the on-disk
implementation.
"""

from __future__ import annotations

from pathlib import Path
from typing import Protocol

from ..hierarchy import AnchorHierarchy
from ..splat.gaussians import GaussianSet, ImageBuffer


class ArtifactRepository(Protocol):
    """Storage operations the CLI needs."""

    def read_image(self, path: Path) -> ImageBuffer:
        """Load an 8-bit PNG or PPM as RGB floats in [0, 1].

        Raises:
            ArtifactIOError: File is missing or not a readable image.
        """
        ...

    def write_image(self, path: Path, image: ImageBuffer) -> None:
        """Write an 8-bit RGB PNG, clamping to [0, 1]."""
        ...

    def read_bytes(self, path: Path) -> bytes: ...

    def write_bytes(self, path: Path, data: bytes) -> None:
        """Replace `path` atomically with `data`."""
        ...

    def load_scores(
        self, artifact: Path, gaussians: GaussianSet, hierarchy: AnchorHierarchy
    ) -> int:
        """Fill the hierarchy's score cache from sidecars; returns tables loaded."""
        ...

    def save_scores(
        self, artifact: Path, gaussians: GaussianSet, hierarchy: AnchorHierarchy
    ) -> int:
        """Persist the hierarchy's cached score tables; returns tables written."""
        ...
