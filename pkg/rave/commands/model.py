"""Model commands: base training and the rate-adaptive pipeline."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import typer

from ..cli import context_state, report_errors
from ..codec.bitstream import RateMeter
from ..codec.checkpoint import Checkpoint, encode_checkpoint, round_to_f32
from ..codec.quant import quantize_set
from ..hierarchy import build_hierarchy
from ..metrics import psnr
from ..models.hierarchy import LevelSpec
from ..models.loss import LossConfig
from ..models.train import FinetuneConfig, LearningRates, TrainConfig
from ..rate_control import anchor_rates
from ..splat.raster import render
from ..training.trainer import finetune_stochastic, train
from .common import load_checkpoint, output_path, parse_floats, repository


def train_command(
    image: Path = typer.Argument(..., help="Target image (PNG or PPM)."),
    out: Path = typer.Option(..., "--out", "-o", help="Checkpoint file to write."),
    num_gaussians: int = typer.Option(
        512, "--num-gaussians", "-n", min=1, help="Number of Gaussians."
    ),
    iterations: int = typer.Option(2000, "--iterations", min=1, help="Adam steps."),
    ssim_lambda: float = typer.Option(
        0.2, "--ssim-lambda", min=0.0, max=1.0, help="Weight of the SSIM term."
    ),
    lr_scale: float = typer.Option(
        1.0, "--lr-scale", min=0.0, help="Multiplier on every learning rate."
    ),
    log_every: int = typer.Option(
        100, "--log-every", min=1, help="Log the loss every N iterations."
    ),
) -> None:
    """Fit Gaussians to an image and write a model checkpoint."""
    with report_errors():
        target = repository.read_image(image)
        config = TrainConfig(
            num_gaussians=num_gaussians,
            iterations=iterations,
            lr=LearningRates().scaled(lr_scale),
            seed=context_state.seed,
            loss=LossConfig(ssim_lambda=ssim_lambda),
            log_every=log_every,
        )
        render_config = context_state.render_config()
        result = train(target, config, render_config)
        model = round_to_f32(result.gaussians)
        data = encode_checkpoint(Checkpoint(gaussians=model))
        repository.write_bytes(output_path(out), data)

        context_state.output.report(
            "Training",
            {
                "gaussians": model.count,
                "iterations": iterations,
                "initial_loss": result.history[0],
                "final_loss": result.history[-1],
                "psnr_db": psnr(render(model, render_config), target),
                "bytes": len(data),
                "out": str(out),
            },
        )


def pipeline_command(
    model_path: Path = typer.Argument(..., help="Checkpoint written by 'train'."),
    image: Path = typer.Option(..., "--image", "-i", help="Training image."),
    out: Path = typer.Option(..., "--out", "-o", help="Checkpoint file to write."),
    fractions: Optional[str] = typer.Option(
        None,
        "--fractions",
        help="Anchor fractions, ascending and ending at 1.0 (e.g. 0.2,0.4,1.0).",
    ),
    levels: Optional[int] = typer.Option(
        None, "--levels", min=1, help="Evenly spaced anchors k/L instead of fractions."
    ),
    iterations: int = typer.Option(
        500, "--iterations", min=1, help="Fine-tuning iterations."
    ),
    ssim_lambda: float = typer.Option(
        0.2, "--ssim-lambda", min=0.0, max=1.0, help="Weight of the SSIM term."
    ),
    lr_scale: float = typer.Option(
        0.2, "--lr-scale", min=0.0, help="Fine-tuning learning-rate multiplier."
    ),
) -> None:
    """Build the anchor hierarchy, fine-tune, and precompute rate tables."""
    with report_errors():
        if fractions is not None and levels is not None:
            raise typer.BadParameter("use either --fractions or --levels")
        if levels is not None:
            spec = LevelSpec.uniform(levels)
        elif fractions is not None:
            spec = LevelSpec(fractions=parse_floats(fractions, "--fractions"))
        else:
            spec = LevelSpec()

        checkpoint = load_checkpoint(model_path)
        target = repository.read_image(image)
        loss = LossConfig(ssim_lambda=ssim_lambda)
        render_config = context_state.render_config()

        hierarchy = build_hierarchy(
            checkpoint.gaussians, spec, target, loss, render_config
        )
        result = finetune_stochastic(
            checkpoint.gaussians,
            hierarchy,
            target,
            FinetuneConfig(
                iterations=iterations,
                seed=context_state.seed,
                lr=LearningRates().scaled(lr_scale),
                loss=loss,
            ),
            render_config,
        )
        tuned = round_to_f32(result.gaussians)
        for level in range(2, hierarchy.levels + 1):
            hierarchy.context_scores(
                level, tuned, target, loss, "local", render_config
            )
        table = anchor_rates(tuned, hierarchy, result.quant_spec, RateMeter())

        data = encode_checkpoint(
            Checkpoint(
                gaussians=tuned,
                hierarchy=hierarchy,
                rate_table=table,
                quant_spec=result.quant_spec,
            )
        )
        repository.write_bytes(output_path(out), data)

        anchor_psnr = [
            psnr(
                render(
                    quantize_set(tuned.take(hierarchy.level(level)), result.quant_spec),
                    render_config,
                ),
                target,
            )
            for level in range(1, hierarchy.levels + 1)
        ]
        context_state.output.report(
            "Pipeline",
            {
                "levels": hierarchy.levels,
                "anchor_counts": list(table.counts),
                "anchor_rates_bytes": list(table.rates),
                "anchor_psnr_db": [round(v, 4) for v in anchor_psnr],
                "scoring_passes": hierarchy.scoring_passes,
                "finetune_iterations": iterations,
                "out": str(out),
            },
        )


def register(app: typer.Typer) -> None:
    app.command("train")(train_command)
    app.command("pipeline")(pipeline_command)
