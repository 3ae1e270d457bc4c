"""Output adapter selecting between Rich console and JSON serialization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import typer
from rich.console import Console
from rich.table import Table


def _json_safe(value: Any) -> Any:
    """Replace non-finite floats, which strict JSON cannot carry."""
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


@dataclass
class OutputAdapter:
    json_mode: bool = False
    console: Console = field(default_factory=Console)

    def render(self, data: Any) -> None:
        """Render data either as JSON or via Rich."""
        if self.json_mode:
            # sorted keys keep output stable for tests
            typer.echo(json.dumps(_json_safe(data), sort_keys=True))
            return
        self.console.print(data)

    def report(self, title: str, data: dict[str, Any]) -> None:
        """Key/value summary: a two-column table, or the dict itself as JSON."""
        if self.json_mode:
            self.render(data)
            return
        table = Table(title=title)
        table.add_column("Field", style="cyan")
        table.add_column("Value", style="green")
        for key, value in data.items():
            table.add_row(key, str(value))
        self.console.print(table)

    def rows(
        self, title: str, columns: list[str], records: list[dict[str, Any]]
    ) -> None:
        if self.json_mode:
            self.render({"rows": records})
            return
        table = Table(title=title)
        for column in columns:
            table.add_column(column)
        for record in records:
            table.add_row(*(str(record[column]) for column in columns))
        self.console.print(table)
