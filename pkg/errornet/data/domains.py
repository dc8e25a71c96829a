# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Resolve a domain name from a run configuration to its train / val / test samples."""

from errornet.data.dataset import STANDARD_SPLITS, DatasetSplits, SplitSpec, load_dataset
from errornet.data.synth import get_preset, synth_generate
from errornet.utils.config import RunConfig


def split_for(config: RunConfig, domain: str) -> SplitSpec:
    if config.dataset == "dir" and domain.lower() in STANDARD_SPLITS:
        return STANDARD_SPLITS[domain.lower()]
    return SplitSpec(config.n_train, config.n_val, config.n_test)


def load_domain(config: RunConfig, domain: str) -> DatasetSplits:
    """Raw (unnormalised) samples of one domain, generated or read from `data_root`."""
    split = split_for(config, domain)
    if config.dataset == "synth":
        samples = synth_generate(
            get_preset(domain), split.total, config.resolution, seed=config.data_seed
        )
        return DatasetSplits.from_counts(samples, split)
    assert config.data_root is not None
    samples = load_dataset(
        config.data_root, domain, split, config.resolution, seed=config.data_seed
    )
    return DatasetSplits.from_samples(samples)
