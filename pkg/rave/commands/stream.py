"""Bitstream commands: encode at a rate or level, decode, render."""

from __future__ import annotations

from enum import Enum
from pathlib import Path
from typing import Optional

import typer

from ..cli import context_state, report_errors
from ..codec.backends import DEFAULT_BACKEND, UNCOMPRESSED, resolve_backend
from ..codec.bitstream import ANCHOR_INTERPOLATED, decode
from ..codec.checkpoint import (
    Checkpoint,
    encode_checkpoint,
    load_artifact,
    round_to_f32,
)
from ..codec.quant import fit_spec, quantize_set
from ..metrics import psnr
from ..models.loss import LossConfig
from ..rate_control import RateController
from ..splat.raster import render
from .common import (
    load_checkpoint,
    output_path,
    parse_floats,
    repository,
    require_hierarchy,
)


class ScoringModeChoice(str, Enum):
    local = "local"
    global_ = "global"


class BackendChoice(str, Enum):
    lzma = "lzma"
    zlib = "zlib"
    bz2 = "bz2"
    none = UNCOMPRESSED


def build_controller(
    model_path: Path,
    checkpoint: Checkpoint,
    backend_name: str,
    image: Optional[Path],
    ssim_lambda: float = 0.2,
) -> RateController:
    """Controller over a pipeline checkpoint, with cached sidecar scores loaded."""
    hierarchy = require_hierarchy(checkpoint)
    backend = resolve_backend(backend_name)
    repository.load_scores(model_path, checkpoint.gaussians, hierarchy)
    target = repository.read_image(image) if image is not None else None
    return RateController(
        checkpoint.gaussians,
        hierarchy,
        target,
        loss=LossConfig(ssim_lambda=ssim_lambda),
        render_config=context_state.render_config(),
        quant_spec=checkpoint.quant_spec,
        backend=backend,
        # stored anchor rates were measured with the default backend
        rate_table=checkpoint.rate_table if backend is DEFAULT_BACKEND else None,
    )


def persist_new_scores(
    model_path: Path, controller: RateController, passes_before: int
) -> None:
    if controller.hierarchy.scoring_passes > passes_before:
        repository.save_scores(model_path, controller.gaussians, controller.hierarchy)


def encode_command(
    model_path: Path = typer.Argument(..., help="Checkpoint written by 'pipeline'."),
    out: Path = typer.Option(..., "--out", "-o", help="Bitstream file to write."),
    rate: Optional[int] = typer.Option(
        None, "--rate", min=0, help="Target bitstream size in bytes."
    ),
    level: Optional[int] = typer.Option(
        None, "--level", min=1, help="Encode anchor G_L exactly instead of a rate."
    ),
    mode: ScoringModeChoice = typer.Option(
        ScoringModeChoice.local,
        "--mode",
        help="Rank context Gaussians rendering G_l+1 (local) or the full model.",
    ),
    backend: BackendChoice = typer.Option(
        BackendChoice.lzma, "--backend", help="Entropy coder for the payload."
    ),
    correct: bool = typer.Option(
        False, "--correct", help="Re-interpolate once using the achieved size."
    ),
    clamp: bool = typer.Option(
        False, "--clamp", help="Encode G_1 instead of failing below the lowest rate."
    ),
    image: Optional[Path] = typer.Option(
        None,
        "--image",
        "-i",
        help="Training image; needed when context scores are not cached.",
    ),
) -> None:
    """Encode the model at a target byte rate or at an anchor level."""
    with report_errors():
        if (rate is None) == (level is None):
            raise typer.BadParameter("pass exactly one of --rate or --level")
        checkpoint = load_checkpoint(model_path)
        controller = build_controller(model_path, checkpoint, backend.value, image)
        passes_before = controller.hierarchy.scoring_passes
        if level is not None:
            encoded = controller.encode_level(level)
        else:
            encoded = controller.encode_at_rate(
                rate, mode.value, clamp_below=clamp, correct=correct
            )
        persist_new_scores(model_path, controller, passes_before)
        repository.write_bytes(output_path(out), encoded.bitstream)

        context_state.output.report(
            "Encode",
            {**encoded.report.model_dump(), "backend": backend.value, "out": str(out)},
        )


def decode_command(
    stream: Path = typer.Argument(..., help="Bitstream written by 'encode'."),
    out: Optional[Path] = typer.Option(
        None, "--out", "-o", help="Also write the decoded Gaussians as a checkpoint."
    ),
) -> None:
    """Decode a bitstream and describe its contents."""
    with report_errors():
        decoded = decode(repository.read_bytes(stream))
        if out is not None:
            data = encode_checkpoint(
                Checkpoint(gaussians=round_to_f32(decoded.gaussians))
            )
            repository.write_bytes(output_path(out), data)
        gaussians = decoded.gaussians
        anchor = (
            "interpolated"
            if decoded.anchor_level == ANCHOR_INTERPOLATED
            else decoded.anchor_level
        )
        context_state.output.report(
            "Decode",
            {
                "gaussians": gaussians.count,
                "canvas": f"{gaussians.canvas_width}x{gaussians.canvas_height}",
                "anchor_level": anchor,
                "backend": decoded.backend or UNCOMPRESSED,
                "out": str(out) if out is not None else None,
            },
        )


def render_command(
    artifact: Path = typer.Argument(..., help="Checkpoint or bitstream."),
    out: Path = typer.Option(..., "--out", "-o", help="PNG file to write."),
    level: Optional[int] = typer.Option(
        None, "--level", min=1, help="Render only anchor G_L of a checkpoint."
    ),
    quantized: bool = typer.Option(
        False,
        "--quantized",
        help="Snap a checkpoint onto its quantization grid before rendering.",
    ),
    background: str = typer.Option(
        "0,0,0", "--background", help="Background color as r,g,b in [0, 1]."
    ),
    image: Optional[Path] = typer.Option(
        None, "--image", "-i", help="Reference image for a PSNR report."
    ),
) -> None:
    """Rasterize a checkpoint or a decoded bitstream to an 8-bit PNG."""
    with report_errors():
        loaded = load_artifact(repository.read_bytes(artifact))
        if isinstance(loaded, Checkpoint):
            gaussians = loaded.gaussians
            if level is not None:
                gaussians = gaussians.take(require_hierarchy(loaded).level(level))
            if quantized:
                spec = loaded.quant_spec or fit_spec(loaded.gaussians)
                gaussians = quantize_set(gaussians, spec)
        else:
            if level is not None or quantized:
                raise typer.BadParameter(
                    "--level and --quantized apply to checkpoints only"
                )
            gaussians = loaded.gaussians

        rgb = parse_floats(background, "--background")
        if len(rgb) != 3:
            raise typer.BadParameter("--background expects three numbers")
        rendered = render(gaussians, context_state.render_config(background=rgb))
        repository.write_image(output_path(out), rendered)

        summary: dict[str, object] = {
            "gaussians": gaussians.count,
            "width": rendered.width,
            "height": rendered.height,
            "out": str(out),
        }
        if image is not None:
            summary["psnr_db"] = psnr(rendered, repository.read_image(image))
        context_state.output.report("Render", summary)


def register(app: typer.Typer) -> None:
    app.command("encode")(encode_command)
    app.command("decode")(decode_command)
    app.command("render")(render_command)
