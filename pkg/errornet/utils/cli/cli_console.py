# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Base CLI Console classes for errornet."""

from abc import ABC, abstractmethod
from enum import Enum

from rich.table import Table

from errornet.training.training_basics import EpochRecord, TrainExecution, TrainState


class ConsoleType(Enum):
    """Available console types."""

    SIMPLE = "simple"  # One line per epoch
    RICH = "rich"  # Live-updating table


TRAIN_STATE_INFO = {
    TrainState.IDLE: ("white", "idle"),
    TrainState.RUNNING: ("blue", "running"),
    TrainState.COMPLETED: ("green", "completed"),
    TrainState.EARLY_STOPPED: ("yellow", "stopped early"),
    TrainState.ERROR: ("red", "failed"),
}


class CLIConsole(ABC):
    """Base class for CLI console implementations."""

    def __init__(self):
        self.epoch_history: dict[int, EpochRecord] = {}
        self.execution: TrainExecution | None = None

    @abstractmethod
    def start(self):
        """Start the console display."""
        pass

    @abstractmethod
    def update_status(
        self, record: EpochRecord | None = None, execution: TrainExecution | None = None
    ):
        """Update the console with a finished epoch and/or the run state."""
        pass

    @abstractmethod
    def print_run_details(self, details: dict[str, str]):
        """Print the run configuration before training starts."""
        pass

    @abstractmethod
    def print(self, message: str, color: str = "blue", bold: bool = False):
        """Print a message to the console."""
        pass

    @abstractmethod
    def stop(self):
        """Stop the console and print the run summary."""
        pass


def generate_epoch_table(records: list[EpochRecord], metric_name: str) -> Table:
    """Epoch-by-epoch table of losses and the validation metric."""
    table = Table(show_header=True, header_style="bold cyan")
    table.add_column("Epoch", justify="right")
    table.add_column("Step", justify="right")
    table.add_column("Loss", justify="right")
    table.add_column("Components")
    table.add_column(f"Val {metric_name}", justify="right")
    for record in records:
        components = " ".join(f"{k}={v:.4f}" for k, v in sorted(record.components.items()))
        marker = " [green]*[/green]" if record.improved else ""
        table.add_row(
            str(record.epoch),
            str(record.step),
            f"{record.loss:.4f}",
            components,
            f"{record.val_metric:.4f}{marker}",
        )
    return table


def generate_summary_table(execution: TrainExecution) -> Table:
    color, label = TRAIN_STATE_INFO[execution.state]
    table = Table(show_header=False, width=60)
    table.add_column("Metric", style="cyan", width=20)
    table.add_column("Value", style="green", width=40)
    table.add_row("Stage", execution.checkpoint_name)
    table.add_row("State", f"[{color}]{label}[/{color}]")
    table.add_row("Epochs", str(len(execution.epochs)))
    if execution.best_metric is not None:
        table.add_row(
            f"Best {execution.metric_name}",
            f"{execution.best_metric:.4f} (epoch {execution.best_epoch})",
        )
    if execution.checkpoint_path is not None:
        table.add_row("Checkpoint", str(execution.checkpoint_path))
    table.add_row("Execution Time", f"{execution.execution_time:.2f}s")
    if execution.error:
        table.add_row("Error", f"[red]{execution.error}[/red]")
    return table
