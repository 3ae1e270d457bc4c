"""Typer CLI entrypoint for RAVE.

Global flags live on the root callback and are stored in `context_state`;
subcommands are registered from `rave.commands`.
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, Optional

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler

from .config import RaveSettings
from .exceptions import ExitCode, RaveError, exit_code_for
from .models.render import RenderConfig
from .output import OutputAdapter

app = typer.Typer(
    help="Rate-adaptive encoding of 2D Gaussian-splat scenes.",
    no_args_is_help=False,
)

logger = logging.getLogger(__name__)


@dataclass
class RaveContext:
    seed: int = 0
    threads: int = 1
    verbose: int = 0
    json: bool = False
    yes: bool = False
    output: Optional[OutputAdapter] = None

    def init_output(self) -> None:
        # Always recreate to reflect current flags
        self.output = OutputAdapter(json_mode=self.json)

    def render_config(self, **overrides: object) -> RenderConfig:
        return RenderConfig(threads=self.threads, **overrides)


context_state = RaveContext()


def configure_logging(verbose: int, settings: RaveSettings) -> None:
    if verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = settings.logging_level
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


@contextmanager
def report_errors() -> Iterator[None]:
    """Turn library errors into a one-line diagnostic and an exit code."""
    try:
        yield
    except RaveError as err:
        code = exit_code_for(err)
        logger.debug("command failed", exc_info=err)
        typer.echo(f"Error: {err}", err=True)
        raise typer.Exit(int(code)) from None
    except ValidationError as err:
        typer.echo(f"Invalid option: {err}", err=True)
        raise typer.Exit(int(ExitCode.USAGE)) from None


def version_callback(value: bool) -> None:  # pragma: no cover - simple passthrough
    if value:
        from . import VERSION

        typer.echo(f"RAVE version: {VERSION}")
        raise typer.Exit()


@app.callback(invoke_without_command=True)
def main(
    ctx: typer.Context,
    seed: Optional[int] = typer.Option(
        None, "--seed", min=0, help="Random seed (default: RAVE_SEED or 0)."
    ),
    threads: Optional[int] = typer.Option(
        None,
        "--threads",
        min=1,
        help="Rasterizer worker threads (default: RAVE_THREADS or 1).",
    ),
    verbose: int = typer.Option(
        0,
        "--verbose",
        "-v",
        count=True,
        help="Log progress (-v: INFO, -vv: DEBUG).",
    ),
    json: bool = typer.Option(
        False,
        "--json",
        help="Emit machine-readable JSON instead of Rich formatting.",
        show_default=True,
    ),
    yes: bool = typer.Option(
        False,
        "--yes",
        help="Overwrite existing output files without asking.",
        show_default=True,
    ),
    version: bool = typer.Option(
        False,
        "--version",
        help="Show the RAVE version and exit.",
        callback=version_callback,
        is_eager=True,
    ),
) -> None:
    """Root callback storing global flags in context."""
    try:
        settings = RaveSettings.load()
    except RaveError as err:
        typer.echo(f"Configuration error: {err}", err=True)
        raise typer.Exit(int(ExitCode.USAGE)) from None

    context_state.seed = settings.seed if seed is None else seed
    context_state.threads = settings.threads if threads is None else threads
    context_state.verbose = verbose
    context_state.json = json
    context_state.yes = yes
    context_state.init_output()
    configure_logging(verbose, settings)

    # Show help when no command is provided
    if ctx.invoked_subcommand is None:
        typer.echo(ctx.get_help())
        raise typer.Exit(0)


# Register commands (after context_state is defined)
from .commands import model, stream, sweep  # noqa: E402

model.register(app)
stream.register(app)
sweep.register(app)


if __name__ == "__main__":  # pragma: no cover
    app()
