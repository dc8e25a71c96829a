# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Simple CLI Console implementation."""

from typing import override

from rich.console import Console
from rich.panel import Panel

from errornet.training.training_basics import EpochRecord, TrainExecution
from errornet.utils.cli.cli_console import CLIConsole, generate_summary_table


class SimpleCLIConsole(CLIConsole):
    """Prints one line per finished epoch and a summary table at the end."""

    def __init__(self):
        super().__init__()
        self.console: Console = Console()

    @override
    def start(self):
        pass

    @override
    def update_status(
        self, record: EpochRecord | None = None, execution: TrainExecution | None = None
    ):
        if record and record.epoch not in self.epoch_history:
            self.epoch_history[record.epoch] = record
            metric = execution.metric_name if execution else "metric"
            components = " ".join(f"{k}={v:.4f}" for k, v in sorted(record.components.items()))
            marker = " [green]*[/green]" if record.improved else ""
            self.console.print(
                f"[cyan]epoch {record.epoch:>3}[/cyan] step {record.step:>5} "
                f"loss {record.loss:.4f} ({components}) val {metric} "
                f"{record.val_metric:.4f}{marker} [dim]{record.duration:.1f}s[/dim]"
            )
        if execution:
            self.execution = execution

    @override
    def print_run_details(self, details: dict[str, str]):
        renderable = "\n".join(f"[bold]{key}:[/bold] {value}" for key, value in details.items())
        self.console.print(Panel(renderable, title="Run Details", border_style="blue"))

    @override
    def print(self, message: str, color: str = "blue", bold: bool = False):
        message = f"[bold]{message}[/bold]" if bold else message
        self.console.print(f"[{color}]{message}[/{color}]")

    @override
    def stop(self):
        if self.execution:
            self.console.print(generate_summary_table(self.execution))
