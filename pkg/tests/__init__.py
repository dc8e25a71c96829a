# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Tests package for errornet."""
