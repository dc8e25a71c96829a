# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Flat run configuration with file, environment and command-line sources."""

import os
import types
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Union, get_args, get_origin, get_type_hints

import yaml

from errornet.networks.base import NetworkSpec
from errornet.utils.constants import DEFAULT_OUTPUT_ROOT, OUTPUT_ROOT_ENV_VAR
from errornet.utils.errors import ConfigError

__all__ = [
    "ConfigError",
    "DataConfig",
    "RunConfig",
    "TrainConfig",
    "load_config_file",
    "parse_overrides",
    "resolve_config_value",
]

STAGES = ("seg", "vae", "err", "joint")
DEFAULT_DOMAINS = ["chase-like", "drive-like", "stare-like", "aria-like", "hrf-like"]


@dataclass
class DataConfig:
    """
    Where samples come from.

    `dataset=synth` generates the named presets on the fly; `dataset=dir` reads
    `<data_root>/<domain>/images|masks|fov`.
    """

    dataset: str = "synth"
    data_root: str | None = None
    train_domain: str = "chase-like"
    eval_domains: list[str] = field(default_factory=lambda: list(DEFAULT_DOMAINS))
    n_train: int = 24
    n_val: int = 6
    n_test: int = 10
    data_seed: int = 0
    prefetch: int = 0


@dataclass
class TrainConfig:
    """Optimisation settings for one stage."""

    stage: str = "seg"
    epochs: int = 30
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0
    patience: int = 10
    resume: bool = False
    seg_loss: str = "bce"
    target_mode: str = "signed"
    joint_input: str = "injected"
    use_vae: bool = True
    kl_weight: float = 1.0
    seg_weight: float = 1.0
    pred_weight: float = 1.0
    inject_variance: float = 1e-4


@dataclass
class RunConfig(DataConfig, TrainConfig):
    """
    Every setting of a run as one flat key space.

    Network size, data selection, optimisation and output locations share a single namespace
    so that any key can come from a config file or a `--set key=value` override.
    """

    resolution: int = 64
    base_width: int = 4
    width_scale: float = 1.0
    err_depth: int = 3
    output_dir: str | None = None
    checkpoint_dir: str | None = None
    console: str = "auto"
    bench_seeds: list[int] = field(default_factory=lambda: [0, 1, 2])

    def __post_init__(self):
        self.validate()

    @classmethod
    def keys(cls) -> list[str]:
        return sorted(f.name for f in fields(cls))

    @classmethod
    def from_mapping(cls, values: dict[str, Any]) -> "RunConfig":
        unknown = sorted(set(values) - set(cls.keys()))
        if unknown:
            raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
        hints = get_type_hints(cls)
        return cls(**{key: _coerce(key, value, hints[key]) for key, value in values.items()})

    @classmethod
    def create(
        cls,
        *,
        config_file: str | Path | None = None,
        overrides: dict[str, Any] | None = None,
    ) -> "RunConfig":
        """
        Merge defaults, an optional config file and overrides (highest priority).

        output_dir alone also reads ERRORNET_OUTPUT_ROOT, between the overrides and the file.
        """
        file_values = load_config_file(config_file) if config_file is not None else {}
        cli_values = {k: v for k, v in (overrides or {}).items() if v is not None}
        values: dict[str, Any] = {**file_values, **cli_values}
        values["output_dir"] = resolve_config_value(
            cli_value=cli_values.get("output_dir"),
            config_value=file_values.get("output_dir"),
            env_var=OUTPUT_ROOT_ENV_VAR,
        )
        if values["output_dir"] is None:
            values["output_dir"] = str(DEFAULT_OUTPUT_ROOT)
        return cls.from_mapping(values)

    def replace(self, **changes: Any) -> "RunConfig":
        values = asdict(self)
        values.update(changes)
        return RunConfig.from_mapping(values)

    def validate(self) -> None:
        if self.stage not in STAGES:
            raise ConfigError(f"stage must be one of {', '.join(STAGES)}, got {self.stage}")
        for key in ("epochs", "batch_size", "n_train"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1, got {getattr(self, key)}")
        for key in ("n_val", "n_test", "patience", "prefetch"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be >= 0, got {getattr(self, key)}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        choices = {
            "dataset": ("synth", "dir"),
            "seg_loss": ("bce", "mse"),
            "target_mode": ("signed", "squared"),
            "joint_input": ("injected", "raw"),
            "console": ("auto", "simple", "rich"),
        }
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key} must be one of {', '.join(allowed)}")
        if self.dataset == "dir" and not self.data_root:
            raise ConfigError("dataset=dir needs data_root")
        if self.err_depth not in (3, 4):
            raise ConfigError(f"err_depth must be 3 or 4, got {self.err_depth}")

    @property
    def network_spec(self) -> NetworkSpec:
        return NetworkSpec(
            resolution=self.resolution, base_width=self.base_width, width_scale=self.width_scale
        )

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir or DEFAULT_OUTPUT_ROOT)

    @property
    def checkpoint_path(self) -> Path:
        if self.checkpoint_dir:
            return Path(self.checkpoint_dir)
        return self.output_path / "checkpoints"

    def effective_lines(self) -> list[str]:
        lines = []
        for key in self.keys():
            value = getattr(self, key)
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            elif value is None:
                value = ""
            elif isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{key}={value}")
        return lines

    def write_effective(self, directory: Path | None = None) -> Path:
        """Echo the effective configuration as sorted key=value lines."""
        directory = directory or self.output_path
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "effective_config.txt"
        path.write_text("\n".join(self.effective_lines()) + "\n", encoding="utf-8")
        return path


def _coerce(key: str, value: Any, hint: Any) -> Any:
    """Convert a raw (possibly string) value to the field's declared type."""
    optional = False
    if get_origin(hint) in (Union, types.UnionType):
        args = [a for a in get_args(hint) if a is not type(None)]
        optional = len(args) < len(get_args(hint))
        hint = args[0]
    if value is None or (optional and value == ""):
        if optional:
            return None
        raise ConfigError(f"{key} cannot be empty")
    try:
        if get_origin(hint) is list:
            (item,) = get_args(hint)
            items = value.split(",") if isinstance(value, str) else list(value)
            return [item(str(v).strip()) for v in items if str(v).strip()]
        if hint is bool:
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if hint is int and isinstance(value, float) and not value.is_integer():
            raise ValueError(value)
        return hint(value) if hint is not int else int(str(value).strip())
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid value for {key}: {value!r}") from e


def load_config_file(path: str | Path) -> dict[str, Any]:
    """
    Read a flat mapping from YAML (.yaml / .yml) or from `key=value` lines (any other suffix).

    Blank lines and lines starting with '#' are ignored in the line format.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e.strerror}") from e

    if path.suffix in (".yaml", ".yml"):
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"Error parsing YAML config: {e}") from e
        if loaded is None:
            return {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path} must contain a flat mapping")
        return dict(loaded)

    values: dict[str, Any] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{number}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def parse_overrides(pairs: tuple[str, ...] | list[str]) -> dict[str, str]:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"Override must look like key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def resolve_config_value(
    *,
    cli_value: int | str | float | None,
    config_value: int | str | float | None,
    env_var: str | None = None,
) -> int | str | float | None:
    """Resolve configuration value with priority: CLI > ENV > Config > Default."""
    if cli_value is not None:
        return cli_value

    if env_var and os.getenv(env_var):
        return os.getenv(env_var)

    if config_value is not None:
        return config_value

    return None
