# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

import unittest
from pathlib import Path

from rich.console import Console

from errornet.training.training_basics import EpochRecord, Stage, TrainExecution, TrainState
from errornet.utils.cli import ConsoleFactory, ConsoleType, RichCLIConsole, SimpleCLIConsole
from errornet.utils.cli.cli_console import generate_epoch_table, generate_summary_table


def render(renderable) -> str:
    console = Console(record=True, width=120)
    with console.capture() as capture:
        console.print(renderable)
    return capture.get()


class TestConsoleFactory(unittest.TestCase):
    def test_create(self):
        self.assertIsInstance(ConsoleFactory.create_console(ConsoleType.RICH), RichCLIConsole)
        self.assertIsInstance(ConsoleFactory.create_console(ConsoleType.SIMPLE), SimpleCLIConsole)

    def test_recommended(self):
        self.assertEqual(ConsoleFactory.get_recommended_console_type(True), ConsoleType.RICH)
        self.assertEqual(ConsoleFactory.get_recommended_console_type(False), ConsoleType.SIMPLE)


class TestTables(unittest.TestCase):
    def test_epoch_table(self):
        records = [
            EpochRecord(1, 4, 0.5, {"seg": 0.5}, 0.61, improved=True),
            EpochRecord(2, 8, 0.4, {"seg": 0.4}, 0.58),
        ]
        text = render(generate_epoch_table(records, "dice"))
        self.assertIn("Val dice", text)
        self.assertIn("0.6100 *", text)
        self.assertIn("seg=0.4000", text)

    def test_summary_table(self):
        execution = TrainExecution(stage=Stage.ERR, checkpoint_name="err_novae")
        execution.state = TrainState.ERROR
        execution.error = "boom"
        text = render(generate_summary_table(execution))
        self.assertIn("err_novae", text)
        self.assertIn("failed", text)
        self.assertIn("boom", text)

        execution.state, execution.error = TrainState.COMPLETED, None
        execution.best_metric, execution.best_epoch = 0.7, 3
        execution.checkpoint_path = Path("runs/checkpoints/err_novae.ckpt")
        text = render(generate_summary_table(execution))
        self.assertIn("0.7000 (epoch 3)", text)


class TestSimpleConsole(unittest.TestCase):
    def test_one_line_per_epoch(self):
        console = SimpleCLIConsole()
        console.console = Console(record=True, width=200)
        execution = TrainExecution(stage=Stage.SEG, checkpoint_name="seg")
        record = EpochRecord(1, 4, 0.5, {"seg": 0.5}, 0.61, improved=True)
        console.update_status(record, execution)
        console.update_status(record, execution)
        execution.state = TrainState.COMPLETED
        console.stop()
        text = console.console.export_text()
        self.assertEqual(text.count("epoch   1"), 1)
        self.assertIn("val dice 0.6100", text)
        self.assertIn("completed", text)


class TestRichConsole(unittest.TestCase):
    def test_history_and_summary(self):
        console = RichCLIConsole()
        console.console = Console(record=True, width=120, force_terminal=False)
        execution = TrainExecution(stage=Stage.VAE, checkpoint_name="vae", metric_name="vae_loss")
        console.start()
        console.update_status(EpochRecord(2, 8, 0.3, {}, 0.2), execution)
        console.update_status(EpochRecord(1, 4, 0.4, {}, 0.3), execution)
        execution.state = TrainState.EARLY_STOPPED
        console.stop()
        self.assertEqual(sorted(console.epoch_history), [1, 2])
        self.assertIsNone(console.live)
        self.assertIn("stopped early", console.console.export_text())


if __name__ == "__main__":
    unittest.main()
