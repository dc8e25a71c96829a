# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""CLI console module for errornet."""

from .cli_console import CLIConsole, ConsoleType
from .console_factory import ConsoleFactory
from .rich_console import RichCLIConsole
from .simple_console import SimpleCLIConsole

__all__ = [
    "CLIConsole",
    "ConsoleType",
    "SimpleCLIConsole",
    "RichCLIConsole",
    "ConsoleFactory",
]
