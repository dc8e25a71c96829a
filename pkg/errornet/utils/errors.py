# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Base exception and exit codes shared by every errornet module."""

from enum import IntEnum


class ExitCode(IntEnum):
    """Process exit codes used by the command line front end."""

    SUCCESS = 0
    USAGE = 1
    DATA = 2
    NUMERICAL = 3


class ErrorNetError(Exception):
    """Base class for errornet errors."""

    exit_code: ExitCode = ExitCode.USAGE

    def __init__(self, message: str):
        super().__init__(message)
        self.message: str = message


class UsageError(ErrorNetError):
    """An API was called in a way its contract does not allow."""


class DataError(ErrorNetError):
    """Input data could not be read or is unusable."""

    exit_code = ExitCode.DATA


class NumericalError(ErrorNetError):
    """A computation produced NaN or Inf."""

    exit_code = ExitCode.NUMERICAL


class ConfigError(ErrorNetError):
    """Configuration is invalid, incomplete or out of order."""
