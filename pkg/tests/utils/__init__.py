# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Utility tests for errornet."""
