"""RAVE package initialization.

Rate-adaptive encoding of 2D Gaussian-splat scenes: one trained model, a
nested anchor hierarchy, and a bitstream at any byte rate between the
lowest and highest anchor.

Side effects are kept minimal; subpackages are imported on demand.
"""

from __future__ import annotations

VERSION = "0.1.0"

__all__ = ["VERSION"]
