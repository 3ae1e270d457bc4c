"""Filesystem artifact repository.

Wraps Pillow and file IO with domain exception translation. Every write goes
to a temporary file next to the destination and is renamed into place.
"""

from __future__ import annotations

import logging
import os
import re
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..exceptions import ArtifactIOError, InvalidInputError
from ..hierarchy import AnchorHierarchy
from ..importance import ScoreTable
from ..splat.gaussians import GaussianSet, ImageBuffer

logger = logging.getLogger(__name__)

SIDECAR_SUFFIX = ".scores"
# C<level>-<mode>.scores inside the per-model cache directory
SIDECAR_PATTERN = re.compile(r"^C(\d+)-(local|global)\.scores$")


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and round half-up to 8 bits."""
    return np.floor(np.clip(pixels, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


class FileArtifactRepository:
    """Artifacts stored as plain files under arbitrary paths."""

    def read_image(self, path: Path) -> ImageBuffer:
        try:
            with Image.open(path) as img:
                if img.mode in ("RGBA", "LA", "PA") or "transparency" in img.info:
                    rgba = img.convert("RGBA")
                    white = Image.new("RGBA", rgba.size, (255, 255, 255, 255))
                    rgb = Image.alpha_composite(white, rgba).convert("RGB")
                else:
                    rgb = img.convert("RGB")
                pixels = np.asarray(rgb, dtype=np.float64) / 255.0
        except FileNotFoundError as err:
            raise ArtifactIOError(f"image not found: {path}") from err
        except (UnidentifiedImageError, OSError) as err:
            raise ArtifactIOError(f"cannot read image {path}: {err}") from err
        try:
            image = ImageBuffer(pixels, metadata={"source": str(path)})
        except InvalidInputError as err:
            raise ArtifactIOError(f"image {path} is unusable: {err}") from err
        logger.info(f"Read {image.width}x{image.height} image from {path}")
        return image

    def write_image(self, path: Path, image: ImageBuffer) -> None:
        encoded = Image.fromarray(to_uint8(image.pixels))
        self._atomic(path, lambda handle: encoded.save(handle, format="PNG"))

    def read_bytes(self, path: Path) -> bytes:
        try:
            return Path(path).read_bytes()
        except FileNotFoundError as err:
            raise ArtifactIOError(f"file not found: {path}") from err
        except OSError as err:
            raise ArtifactIOError(f"cannot read {path}: {err}") from err

    def write_bytes(self, path: Path, data: bytes) -> None:
        self._atomic(path, lambda handle: handle.write(data))
        logger.info(f"Wrote {len(data)} bytes to {path}")

    def _atomic(self, path: Path, write) -> None:
        path = Path(path)
        directory = path.parent if str(path.parent) else Path(".")
        try:
            fd, tmp_name = tempfile.mkstemp(
                prefix=f".{path.name}.", suffix=".tmp", dir=directory
            )
        except OSError as err:
            raise ArtifactIOError(f"cannot write {path}: {err}") from err
        try:
            with os.fdopen(fd, "wb") as handle:
                write(handle)
            os.replace(tmp_name, path)
        except OSError as err:
            Path(tmp_name).unlink(missing_ok=True)
            raise ArtifactIOError(f"cannot write {path}: {err}") from err

    def cache_dir(self, artifact: Path, gaussians: GaussianSet) -> Path:
        """Sidecar directory keyed by the model's content fingerprint."""
        artifact = Path(artifact)
        root = artifact.with_name(artifact.name + SIDECAR_SUFFIX)
        return root / gaussians.fingerprint()[:16]

    def load_scores(
        self, artifact: Path, gaussians: GaussianSet, hierarchy: AnchorHierarchy
    ) -> int:
        directory = self.cache_dir(artifact, gaussians)
        if not directory.is_dir():
            return 0
        cached = hierarchy.cached_scores()
        loaded = 0
        for sidecar in sorted(directory.iterdir()):
            match = SIDECAR_PATTERN.match(sidecar.name)
            if match is None:
                continue
            level, mode = int(match.group(1)), match.group(2)
            if (level, mode) in cached or not 2 <= level <= hierarchy.levels:
                continue
            try:
                table = ScoreTable.load(
                    sidecar, provenance=f"level={level};mode={mode}"
                )
            except InvalidInputError as err:
                logger.warning(f"Ignoring malformed score sidecar {sidecar}: {err}")
                continue
            if not np.array_equal(table.indices, hierarchy.context(level)):
                logger.warning(f"Ignoring stale score sidecar {sidecar}")
                continue
            hierarchy.store_scores(level, mode, table)
            loaded += 1
        logger.debug(f"Loaded {loaded} score tables from {directory}")
        return loaded

    def save_scores(
        self, artifact: Path, gaussians: GaussianSet, hierarchy: AnchorHierarchy
    ) -> int:
        directory = self.cache_dir(artifact, gaussians)
        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as err:
            raise ArtifactIOError(f"cannot create cache {directory}: {err}") from err
        written = 0
        for (level, mode), table in sorted(hierarchy.cached_scores().items()):
            sidecar = directory / f"C{level}-{mode}{SIDECAR_SUFFIX}"
            if sidecar.exists():
                continue
            table.save(sidecar)
            written += 1
        return written
