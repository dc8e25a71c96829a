# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

from pathlib import Path

OUTPUT_ROOT_ENV_VAR = "ERRORNET_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = Path("runs")
