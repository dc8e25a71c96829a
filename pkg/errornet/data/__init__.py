# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Datasets: on-disk fundus images and the synthetic vessel generator."""

from errornet.data.dataset import (
    STANDARD_SPLITS,
    Batch,
    DatasetSplits,
    Sample,
    SplitSpec,
    binarize,
    iter_batches,
    load_dataset,
    normalize_fov,
    write_dataset,
)
from errornet.data.domains import load_domain, split_for
from errornet.data.synth import (
    SYNTH_PRESETS,
    CraftedBreak,
    SynthDomain,
    craft_broken_vessel,
    get_preset,
    synth_generate,
)

__all__ = [
    "STANDARD_SPLITS",
    "SYNTH_PRESETS",
    "Batch",
    "CraftedBreak",
    "DatasetSplits",
    "Sample",
    "SplitSpec",
    "SynthDomain",
    "binarize",
    "craft_broken_vessel",
    "get_preset",
    "iter_batches",
    "load_dataset",
    "load_domain",
    "normalize_fov",
    "split_for",
    "synth_generate",
    "write_dataset",
]
