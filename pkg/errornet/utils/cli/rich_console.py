# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Rich CLI Console implementation with a live epoch table."""

from typing import override

from rich.console import Console
from rich.live import Live
from rich.panel import Panel

from errornet.training.training_basics import EpochRecord, TrainExecution
from errornet.utils.cli.cli_console import (
    TRAIN_STATE_INFO,
    CLIConsole,
    generate_epoch_table,
    generate_summary_table,
)


class RichCLIConsole(CLIConsole):
    """Keeps a live-refreshing table of every epoch of the running stage."""

    def __init__(self):
        super().__init__()
        self.console: Console = Console()
        self.live: Live | None = None

    def _renderable(self) -> Panel:
        records = [self.epoch_history[k] for k in sorted(self.epoch_history)]
        metric = self.execution.metric_name if self.execution else "metric"
        table = generate_epoch_table(records, metric)
        if self.execution is None:
            return Panel(table, title="Training")
        color, label = TRAIN_STATE_INFO[self.execution.state]
        return Panel(
            table,
            title=f"{self.execution.checkpoint_name} [{color}]{label}[/{color}]",
            border_style=color,
        )

    @override
    def start(self):
        if self.live is None:
            self.live = Live(self._renderable(), console=self.console, refresh_per_second=4)
            self.live.start()

    @override
    def update_status(
        self, record: EpochRecord | None = None, execution: TrainExecution | None = None
    ):
        if record:
            self.epoch_history[record.epoch] = record
        if execution:
            self.execution = execution
        if self.live is not None:
            self.live.update(self._renderable())

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
        if self.live is not None:
            self.live.update(self._renderable())
            self.live.stop()
            self.live = None
        if self.execution:
            self.console.print(generate_summary_table(self.execution))
