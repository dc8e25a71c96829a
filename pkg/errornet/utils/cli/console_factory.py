# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Console factory for creating different types of CLI consoles."""

from .cli_console import CLIConsole, ConsoleType
from .rich_console import RichCLIConsole
from .simple_console import SimpleCLIConsole


class ConsoleFactory:
    """Factory class for creating CLI console instances."""

    @staticmethod
    def create_console(console_type: ConsoleType) -> CLIConsole:
        """Create a console instance of the given type.

        Args:
            console_type: Type of console to create (SIMPLE or RICH)

        Returns:
            CLIConsole instance
        """
        if console_type == ConsoleType.RICH:
            return RichCLIConsole()
        return SimpleCLIConsole()

    @staticmethod
    def get_recommended_console_type(interactive: bool) -> ConsoleType:
        """Live tables only make sense on a terminal."""
        return ConsoleType.RICH if interactive else ConsoleType.SIMPLE
