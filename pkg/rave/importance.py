"""Gradient-norm importance scores.

A Gaussian's score is the L2 norm of the rendering-loss gradient with respect
to its nine trainable parameters (pos, log_scale, rotation, opacity_logit,
color), computed in one forward/backward pass with rendering restricted to a
caller-chosen subset.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .exceptions import ArtifactIOError, InvalidInputError
from .metrics import combined_loss
from .models.loss import LossConfig
from .models.render import RenderConfig
from .splat.gaussians import GaussianSet, ImageBuffer, as_index_array
from .splat.raster import rasterize

logger = logging.getLogger(__name__)

# sidecar record: Gaussian index, score
SIDECAR_DTYPE = np.dtype([("index", "<u4"), ("score", "<f8")])


@dataclass(frozen=True)
class ScoreTable:
    """Scores for `indices` (ascending); `values[k]` belongs to `indices[k]`."""

    indices: np.ndarray
    values: np.ndarray
    provenance: str = ""

    def __post_init__(self) -> None:
        if self.indices.shape != self.values.shape:
            raise InvalidInputError("score table indices and values differ in length")
        if self.values.size and (
            not np.all(np.isfinite(self.values)) or np.any(self.values < 0.0)
        ):
            raise InvalidInputError("scores must be finite and non-negative")

    def __len__(self) -> int:
        return int(self.indices.size)

    @classmethod
    def from_mapping(
        cls, scores: dict[int, float], provenance: str = ""
    ) -> "ScoreTable":
        indices = np.array(sorted(scores), dtype=np.int64)
        values = np.array([scores[i] for i in indices], dtype=np.float64)
        return cls(indices=indices, values=values, provenance=provenance)

    def as_dict(self) -> dict[int, float]:
        return {int(i): float(v) for i, v in zip(self.indices, self.values)}

    def score_of(self, index: int) -> float:
        pos = int(np.searchsorted(self.indices, index))
        if pos >= self.indices.size or self.indices[pos] != index:
            raise KeyError(index)
        return float(self.values[pos])

    def to_bytes(self) -> bytes:
        records = np.empty(self.indices.size, dtype=SIDECAR_DTYPE)
        records["index"] = self.indices
        records["score"] = self.values
        return records.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, provenance: str = "") -> "ScoreTable":
        if len(data) % SIDECAR_DTYPE.itemsize:
            raise InvalidInputError(
                f"sidecar length {len(data)} is not a multiple of "
                f"{SIDECAR_DTYPE.itemsize}"
            )
        records = np.frombuffer(data, dtype=SIDECAR_DTYPE)
        order = np.argsort(records["index"], kind="stable")
        return cls(
            indices=records["index"][order].astype(np.int64),
            values=records["score"][order].astype(np.float64),
            provenance=provenance,
        )

    def save(self, path: Path) -> None:
        tmp = path.with_name(path.name + ".tmp")
        try:
            tmp.write_bytes(self.to_bytes())
            tmp.replace(path)
        except OSError as err:
            raise ArtifactIOError(f"cannot write score sidecar {path}: {err}") from err

    @classmethod
    def load(cls, path: Path, provenance: str = "") -> "ScoreTable":
        try:
            return cls.from_bytes(path.read_bytes(), provenance=provenance)
        except OSError as err:
            raise ArtifactIOError(f"cannot read score sidecar {path}: {err}") from err


def score_gaussians(
    gaussians: GaussianSet,
    render_subset: Iterable[int] | np.ndarray,
    score_subset: Iterable[int] | np.ndarray,
    target: ImageBuffer,
    loss: Optional[LossConfig] = None,
    render_config: Optional[RenderConfig] = None,
    provenance: str = "",
) -> ScoreTable:
    """Score `score_subset` with only `render_subset` on the canvas."""
    rendered = as_index_array(render_subset)
    scored = as_index_array(score_subset)
    if rendered.size and (rendered[0] < 0 or rendered[-1] >= gaussians.count):
        raise InvalidInputError("render subset indices fall outside the model")
    if not np.all(np.isin(scored, rendered)):
        raise InvalidInputError("score subset must be contained in the render subset")

    subset = gaussians.take(rendered)
    raster = rasterize(subset, render_config)
    _, upstream = combined_loss(raster.image, target, loss)
    grads = raster.backward(upstream).flat()
    norms = np.sqrt(np.sum(grads * grads, axis=1))

    positions = np.searchsorted(rendered, scored)
    logger.debug(
        f"Scored {scored.size} Gaussians rendering {rendered.size} "
        f"({provenance or 'unlabelled'})"
    )
    return ScoreTable(indices=scored, values=norms[positions], provenance=provenance)


def rank_descending(table: ScoreTable) -> np.ndarray:
    """Indices by score, highest first; ties go to the lower index."""
    order = np.lexsort((table.indices, -table.values))
    return table.indices[order]
