"""Rate-distortion sweeps and the scoring ablations.

Rows are written as CSV in `SWEEP_COLUMNS` order with floats at nine
significant digits; an optional SVG plots PSNR against achieved rate.
"""

from __future__ import annotations

import csv
import io
import logging
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import typer

from ..cli import context_state, report_errors
from ..codec.bitstream import decode
from ..exceptions import RaveError
from ..hierarchy import AnchorHierarchy, build_hierarchy
from ..metrics import psnr, ssim
from ..models.hierarchy import LevelSpec
from ..models.render import RenderConfig
from ..models.report import SWEEP_COLUMNS, SweepMode, SweepRow
from ..plotting import rd_plot_svg
from ..rate_control import (
    EncodedRate,
    RateController,
    RateTable,
    evenly_spaced_targets,
    segment_targets,
    sorted_unique,
)
from ..splat.gaussians import ImageBuffer
from ..splat.raster import render
from .common import load_checkpoint, output_path, parse_ints, repository
from .stream import (
    BackendChoice,
    ScoringModeChoice,
    build_controller,
    persist_new_scores,
)

logger = logging.getLogger(__name__)

# PSNR drop between consecutive rates counted as a monotonicity violation
DIP_TOLERANCE_DB = 0.2
DEFAULT_POINTS = 10


class AblationChoice(str, Enum):
    global_ = "global"
    multi_anchor = "multi-anchor"


def format_value(value: object) -> str:
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def sweep_csv(rows: Iterable[SweepRow]) -> bytes:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        record = row.as_record()
        writer.writerow([format_value(record[column]) for column in SWEEP_COLUMNS])
    return buffer.getvalue().encode("utf-8")


def count_violations(
    rows: Sequence[SweepRow], tolerance: float = DIP_TOLERANCE_DB
) -> int:
    """Consecutive rate steps where PSNR drops by more than `tolerance` dB."""
    ordered = sorted(rows, key=lambda r: (r.target_rate_bytes, r.achieved_rate_bytes))
    return sum(
        1
        for a, b in zip(ordered, ordered[1:])
        if np.isfinite(a.psnr_db) and b.psnr_db < a.psnr_db - tolerance
    )


def evaluate(
    encoded: EncodedRate,
    target: ImageBuffer,
    render_config: RenderConfig,
    mode: SweepMode,
) -> SweepRow:
    """Decode the bitstream, render it, and score it against the target."""
    decoded = decode(encoded.bitstream)
    rendered = render(decoded.gaussians, render_config)
    report = encoded.report
    return SweepRow(
        mode=mode,
        target_rate_bytes=report.target_rate_bytes,
        achieved_rate_bytes=report.achieved_rate_bytes,
        num_gaussians=report.count,
        anchor_level=report.level,
        psnr_db=psnr(rendered, target),
        ssim=ssim(rendered, target)[0],
    )


def run_sweep(
    controller: RateController,
    targets: Sequence[int],
    mode: str,
    target: ImageBuffer,
    render_config: RenderConfig,
    rows: list[SweepRow],
    correct: bool = False,
) -> list[SweepRow]:
    """Append one row per target rate to `rows` (kept on failure)."""
    for rate in targets:
        encoded = controller.encode_at_rate(rate, mode, correct=correct)
        rows.append(evaluate(encoded, target, render_config, mode))
        logger.info(
            f"{mode} @ {rate} B: {rows[-1].achieved_rate_bytes} B, "
            f"{rows[-1].psnr_db:.3f} dB"
        )
    return rows


def sweep_targets(
    table: RateTable,
    rates: list[int],
    num_points: Optional[int],
    per_segment: Optional[int],
    anchors_only: bool,
) -> list[int]:
    chosen = sum([bool(rates), num_points is not None, per_segment is not None])
    if chosen + int(anchors_only) > 1:
        raise typer.BadParameter(
            "choose one of --rates, --num-points, --per-segment, --anchors-only"
        )
    if rates:
        return sorted_unique(rates)
    if anchors_only:
        return list(table.rates)
    if per_segment is not None:
        return segment_targets(table, per_segment)
    return evenly_spaced_targets(
        table.rates[0], table.rates[-1], num_points or DEFAULT_POINTS
    )


def write_outputs(rows: list[SweepRow], out: Path, svg: Optional[Path]) -> None:
    repository.write_bytes(out, sweep_csv(rows))
    if svg is not None:
        series: dict[str, list[tuple[float, float]]] = {}
        for row in rows:
            series.setdefault(row.mode, []).append(
                (float(row.achieved_rate_bytes), row.psnr_db)
            )
        repository.write_bytes(svg, rd_plot_svg(series).encode("utf-8"))


def sweep_command(
    model_path: Path = typer.Argument(..., help="Checkpoint written by 'pipeline'."),
    image: Path = typer.Option(..., "--image", "-i", help="Training image."),
    out: Path = typer.Option(..., "--out", "-o", help="CSV file to write."),
    svg: Optional[Path] = typer.Option(None, "--svg", help="Optional SVG plot."),
    rates: Optional[str] = typer.Option(
        None, "--rates", help="Comma-separated target rates in bytes."
    ),
    num_points: Optional[int] = typer.Option(
        None,
        "--num-points",
        min=1,
        help="Evenly spaced targets over the anchor range (default 10).",
    ),
    per_segment: Optional[int] = typer.Option(
        None,
        "--per-segment",
        min=2,
        help="Evenly spaced targets inside every adjacent anchor pair.",
    ),
    anchors_only: bool = typer.Option(
        False, "--anchors-only", help="Sweep exactly the anchor rates."
    ),
    mode: ScoringModeChoice = typer.Option(
        ScoringModeChoice.local, "--mode", help="Context scoring mode."
    ),
    backend: BackendChoice = typer.Option(
        BackendChoice.lzma, "--backend", help="Entropy coder for the payload."
    ),
    correct: bool = typer.Option(
        False, "--correct", help="Apply the one-step rate correction per row."
    ),
) -> None:
    """Encode, decode and score the model at many target rates."""
    with report_errors():
        checkpoint = load_checkpoint(model_path)
        controller = build_controller(model_path, checkpoint, backend.value, image)
        target = controller.target
        passes_before = controller.hierarchy.scoring_passes
        targets = sweep_targets(
            controller.rate_table,
            parse_ints(rates, "--rates"),
            num_points,
            per_segment,
            anchors_only,
        )
        out = output_path(out)
        rows: list[SweepRow] = []
        try:
            run_sweep(
                controller,
                targets,
                mode.value,
                target,
                controller.render_config,
                rows,
                correct=correct,
            )
        except RaveError:
            repository.write_bytes(out, sweep_csv(rows))
            raise
        write_outputs(rows, out, svg)
        persist_new_scores(model_path, controller, passes_before)

        context_state.output.rows(
            f"Sweep ({mode.value})",
            list(SWEEP_COLUMNS),
            [row.as_record() for row in rows],
        )


def multi_anchor_hierarchy(
    controller: RateController, levels: int, target: ImageBuffer
) -> AnchorHierarchy:
    """Evenly spaced anchors with every context ranked, one pass per anchor."""
    spec = LevelSpec.uniform(levels)
    stored = controller.hierarchy
    if stored.fractions == spec.fractions:
        hierarchy = AnchorHierarchy(stored.contexts, stored.count, spec.fractions)
        hierarchy.scoring_passes = 1
    else:
        hierarchy = build_hierarchy(
            controller.gaussians,
            spec,
            target,
            controller.loss,
            controller.render_config,
        )
    for level in range(2, hierarchy.levels + 1):
        hierarchy.context_scores(
            level,
            controller.gaussians,
            target,
            controller.loss,
            "local",
            controller.render_config,
        )
    return hierarchy


def ablate_command(
    model_path: Path = typer.Argument(..., help="Checkpoint written by 'pipeline'."),
    image: Path = typer.Option(..., "--image", "-i", help="Training image."),
    out: Path = typer.Option(..., "--out", "-o", help="CSV file to write."),
    svg: Optional[Path] = typer.Option(None, "--svg", help="Optional SVG plot."),
    mode: AblationChoice = typer.Option(
        ..., "--mode", help="global: compare scoring modes; multi-anchor: L anchors."
    ),
    levels: int = typer.Option(
        50, "--levels", min=1, help="Anchor count for the multi-anchor ablation."
    ),
    per_segment: int = typer.Option(
        DEFAULT_POINTS,
        "--per-segment",
        min=2,
        help="Targets per anchor pair for the global ablation.",
    ),
) -> None:
    """Compare local against global scoring, or against many fixed anchors."""
    with report_errors():
        checkpoint = load_checkpoint(model_path)
        controller = build_controller(
            model_path, checkpoint, BackendChoice.lzma.value, image
        )
        target = controller.target
        render_config = controller.render_config
        out = output_path(out)
        rows: list[SweepRow] = []
        summary: dict[str, object] = {"mode": mode.value}

        try:
            if mode is AblationChoice.global_:
                targets = segment_targets(controller.rate_table, per_segment)
                for scoring in ("local", "global"):
                    scored: list[SweepRow] = []
                    run_sweep(
                        controller, targets, scoring, target, render_config, scored
                    )
                    rows.extend(scored)
                    summary[f"{scoring}_violations"] = count_violations(scored)
                summary["scoring_passes"] = controller.hierarchy.scoring_passes
            else:
                hierarchy = multi_anchor_hierarchy(controller, levels, target)
                anchors = RateController(
                    controller.gaussians,
                    hierarchy,
                    target,
                    loss=controller.loss,
                    render_config=render_config,
                    quant_spec=controller.quant_spec,
                    meter=controller.meter,
                )
                for level in range(1, hierarchy.levels + 1):
                    rows.append(
                        evaluate(
                            anchors.encode_level(level),
                            target,
                            render_config,
                            "multi-anchor",
                        )
                    )
                summary["levels"] = hierarchy.levels
                summary["scoring_passes"] = hierarchy.scoring_passes
        except RaveError:
            repository.write_bytes(out, sweep_csv(rows))
            raise
        write_outputs(rows, out, svg)
        summary["rows"] = len(rows)
        summary["out"] = str(out)
        context_state.output.report("Ablation", summary)


def register(app: typer.Typer) -> None:
    app.command("sweep")(sweep_command)
    app.command("ablate")(ablate_command)
