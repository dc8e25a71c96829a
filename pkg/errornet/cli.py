# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Command Line Interface for ErrorNet."""

import logging
import sys
from pathlib import Path
from typing import Any

import click
import numpy as np
import yaml
from dotenv import load_dotenv
from PIL import Image
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table

from errornet import __version__
from errornet.data import (
    SYNTH_PRESETS,
    Sample,
    SynthDomain,
    binarize,
    get_preset,
    load_domain,
    normalize_fov,
    synth_generate,
    write_dataset,
)
from errornet.data.dataset import IMAGE_SUFFIXES, read_image
from errornet.evaluation import (
    VARIANTS,
    ErrorNetPipeline,
    MetricsMatrix,
    apply_correction,
    evaluate_matrix,
    load_pipelines,
    predict_error,
    uncorrected_variant,
    write_reports,
)
from errornet.evaluation.bench import run_bench
from errornet.training.trainer import train_stage
from errornet.utils.cli import ConsoleFactory, ConsoleType
from errornet.utils.config import STAGES, RunConfig, parse_overrides
from errornet.utils.errors import ConfigError, DataError, ErrorNetError, ExitCode

# Load environment variables
_ = load_dotenv()

console = Console()

ERROR_ENCODING_HEADER = """\
# Signed error map encoding
# Each pixel stores round((v + 1) / 2 * 255) for an error value v in [-1, 1].
# Decode with v = p / 255 * 2 - 1; 128 is (almost) zero error, 0 is -1 and 255 is +1.
"""


class ExitCodeGroup(click.Group):
    """
    Maps errors to process exit codes.

    errornet errors print a one-line diagnostic and exit with their own code; click usage
    errors exit with 1.
    """

    def main(self, *args: Any, **kwargs: Any) -> Any:
        kwargs["standalone_mode"] = False
        try:
            result = super().main(*args, **kwargs)
        except ErrorNetError as e:
            console.print(f"[red]Error: {e.message}[/red]")
            sys.exit(int(e.exit_code))
        except click.ClickException as e:
            e.show()
            sys.exit(int(ExitCode.USAGE))
        except click.Abort:
            console.print("[yellow]Aborted[/yellow]")
            sys.exit(int(ExitCode.USAGE))
        sys.exit(result if isinstance(result, int) else int(ExitCode.SUCCESS))


def config_options(func):
    """`--config` file and repeatable `--set key=value` overrides."""
    func = click.option(
        "--set",
        "overrides",
        multiple=True,
        metavar="KEY=VALUE",
        help="Override any configuration key (repeatable)",
    )(func)
    return click.option(
        "--config",
        "config_file",
        type=click.Path(dir_okay=False),
        envvar="ERRORNET_CONFIG",
        help="Configuration file (.yaml / .yml or key=value lines)",
    )(func)


def load_run_config(
    config_file: str | None, overrides: tuple[str, ...], **flags: Any
) -> RunConfig:
    """Defaults < config file < --set pairs < dedicated flags."""
    values: dict[str, Any] = parse_overrides(overrides)
    values.update({key: value for key, value in flags.items() if value is not None})
    return RunConfig.create(config_file=config_file, overrides=values)


def _console_type(config: RunConfig) -> ConsoleType:
    if config.console == "auto":
        return ConsoleFactory.get_recommended_console_type(sys.stdout.isatty())
    return ConsoleType(config.console)


@click.group(cls=ExitCodeGroup)
@click.version_option(version=__version__)
@click.option(
    "--log-level",
    default="INFO",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    help="Logging level of the errornet library",
)
def cli(log_level: str):
    """ErrorNet - segmentation error correction for curvilinear structures."""
    logging.basicConfig(
        level=log_level.upper(),
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


@cli.command()
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option(
    "--preset",
    default="chase-like",
    type=click.Choice(sorted(SYNTH_PRESETS)),
    help="Synthetic domain preset",
)
@click.option("-n", "count", default=28, type=int, help="Number of samples")
@click.option("--seed", default=0, type=int, help="Generator seed")
@click.option("--resolution", default=64, type=int, help="Image side in pixels")
@click.option(
    "--param",
    "params",
    multiple=True,
    metavar="KEY=VALUE",
    help="Override a generator parameter of the preset (repeatable)",
)
def synth(out_dir: str, preset: str, count: int, seed: int, resolution: int, params: tuple):
    """Generate a synthetic vessel dataset and its manifest."""
    if count < 1:
        raise ConfigError(f"-n must be >= 1, got {count}")
    domain = get_preset(preset)
    if params:
        changes = parse_overrides(params)
        base = domain.as_dict()
        unknown = sorted(set(changes) - set(base))
        if unknown:
            raise ConfigError(f"Unknown generator parameters: {', '.join(unknown)}")
        domain = SynthDomain.from_dict(
            {**base, **{key: yaml.safe_load(value) for key, value in changes.items()}}
        )

    samples = synth_generate(domain, count, resolution, seed=seed)
    root = write_dataset(samples, out_dir)
    manifest = {
        "preset": preset,
        "seed": seed,
        "resolution": resolution,
        "count": count,
        "parameters": domain.as_dict(),
        "ids": [sample.id for sample in samples],
    }
    try:
        with open(root / "manifest.yaml", "w", encoding="utf-8") as f:
            yaml.safe_dump(manifest, f, sort_keys=False)
    except OSError as e:
        raise DataError(f"Cannot write manifest in {root}: {e.strerror}") from e
    console.print(f"[green]Wrote {count} {domain.name} samples to {root / domain.name}[/green]")


@cli.command()
@config_options
@click.option("--stage", type=click.Choice(STAGES), help="Stage to train")
@click.option("--epochs", type=int, help="Number of epochs")
@click.option("--seed", type=int, help="Run seed")
@click.option("--output-dir", "-o", help="Output directory")
@click.option("--resume", is_flag=True, default=None, help="Continue from <stage>.last.ckpt")
@click.option(
    "--console-type",
    "-ct",
    "console_type",
    type=click.Choice(["simple", "rich"], case_sensitive=False),
    help="Type of console to use (default: rich on a terminal, simple otherwise)",
)
def train(
    config_file: str | None,
    overrides: tuple[str, ...],
    stage: str | None,
    epochs: int | None,
    seed: int | None,
    output_dir: str | None,
    resume: bool | None,
    console_type: str | None,
):
    """Train one stage; earlier stages must have been trained into the same checkpoint dir."""
    config = load_run_config(
        config_file,
        overrides,
        stage=stage,
        epochs=epochs,
        seed=seed,
        output_dir=output_dir,
        resume=resume,
        console=console_type.lower() if console_type else None,
    )
    effective = config.write_effective()
    cli_console = ConsoleFactory.create_console(_console_type(config))
    cli_console.print_run_details(
        {
            "Stage": config.stage,
            "Train domain": config.train_domain,
            "Epochs": str(config.epochs),
            "Seed": str(config.seed),
            "Checkpoints": str(config.checkpoint_path),
            "Effective config": str(effective),
        }
    )
    checkpoint = train_stage(config, cli_console=cli_console)
    cli_console.print(
        f"Best {checkpoint.meta.get('metric')}: {checkpoint.meta.get('best_metric')}",
        color="green",
    )


def _parse_models(models: tuple[str, ...], config: RunConfig) -> dict[str, Path]:
    if not models:
        return {config.train_domain: config.checkpoint_path}
    parsed: dict[str, Path] = {}
    for item in models:
        name, _, directory = item.rpartition("=")
        parsed[name or config.train_domain] = Path(directory)
    return parsed


def _matrix_table(matrix: MetricsMatrix, metric: str) -> Table:
    table = Table(title=f"{matrix.variant} ({metric}, %)")
    table.add_column("Train on", style="cyan")
    for column in matrix.columns:
        table.add_column(column, justify="right")
    table.add_column("Avg", justify="right", style="bold")
    grid, averages = matrix.values(metric), matrix.row_averages(metric)
    for i, train in enumerate(matrix.rows):
        cells = [
            f"[bold]{100 * grid[i, j]:.1f}[/bold]" if train == test else f"{100 * grid[i, j]:.1f}"
            for j, test in enumerate(matrix.columns)
        ]
        table.add_row(train, *cells, f"{100 * averages[i]:.1f}")
    return table


@cli.command(name="eval")
@config_options
@click.option(
    "--model",
    "models",
    multiple=True,
    metavar="[TRAIN=]DIR",
    help="Checkpoint directory of a train domain (repeatable); defaults to checkpoint_dir",
)
@click.option("--output-dir", "-o", help="Directory receiving report.csv and report.md")
@click.option(
    "--no-correction", is_flag=True, help="Only score uncorrected variants (base, joint_nocorr)"
)
def evaluate(
    config_file: str | None,
    overrides: tuple[str, ...],
    models: tuple[str, ...],
    output_dir: str | None,
    no_correction: bool,
):
    """Cross-domain Dice / IoU matrices of the base network and every available ErrorNet."""
    config = load_run_config(config_file, overrides, output_dir=output_dir)
    checkpoint_dirs = _parse_models(models, config)
    datasets = {
        domain: load_domain(config, domain).normalized().test for domain in config.eval_domains
    }
    variants = ["base"] + [
        variant
        for variant in VARIANTS
        if variant != "base"
        and not (no_correction and VARIANTS[variant] is not None)
        and all(variant in ErrorNetPipeline.available_variants(d) for d in checkpoint_dirs.values())
    ]
    matrices = []
    for variant in variants:
        pipelines = load_pipelines(checkpoint_dirs, variant)
        matrices.append(
            evaluate_matrix(
                pipelines,
                datasets,
                with_correction=VARIANTS[variant] is not None,
                variant=variant,
            )
        )
    config.write_effective()
    csv_path, md_path = write_reports(matrices, config.output_path)
    for matrix in matrices:
        console.print(_matrix_table(matrix, "dice"))
    console.print(f"[green]Reports written to {csv_path} and {md_path}[/green]")


def _input_images(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise DataError(f"No images in {path}")
        return files
    if not path.is_file():
        raise DataError(f"Cannot read image {path}: no such file")
    return [path]


def _save_plane(
    plane: np.ndarray, size: tuple[int, int], path: Path, resample: Image.Resampling
) -> None:
    """Write an 8-bit plane resized back to the input image's (width, height)."""
    image = Image.fromarray(np.asarray(plane, dtype=np.uint8)).resize(size, resample=resample)
    try:
        image.save(path)
    except OSError as e:
        raise DataError(f"Cannot write {path}: {e.strerror}") from e


def _save_probability(prob: np.ndarray, size: tuple[int, int], out: Path, name: str) -> None:
    prob_path, mask_path = out / f"{name}_prob.png", out / f"{name}_mask.png"
    _save_plane(np.rint(np.clip(prob, 0, 1) * 255), size, prob_path, Image.Resampling.BILINEAR)
    _save_plane(binarize(prob) * 255, size, mask_path, Image.Resampling.NEAREST)


def encode_error_map(e_hat: np.ndarray) -> np.ndarray:
    """Signed map in [-1, 1] as 8-bit: round((v + 1) / 2 * 255)."""
    return np.rint((np.clip(e_hat, -1.0, 1.0) + 1.0) / 2.0 * 255.0).astype(np.uint8)


@cli.command()
@config_options
@click.argument("image_path", type=click.Path())
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--checkpoints", "-c", help="Checkpoint directory (defaults to checkpoint_dir)")
@click.option(
    "--variant",
    default="joint",
    type=click.Choice(list(VARIANTS)),
    help="Which trained networks to use",
)
@click.option("--correct", is_flag=True, help="Also write the error map and corrected masks")
def infer(
    config_file: str | None,
    overrides: tuple[str, ...],
    image_path: str,
    out_dir: str,
    checkpoints: str | None,
    variant: str,
    correct: bool,
):
    """Segment an image (or a directory of images) and optionally correct the result."""
    config = load_run_config(config_file, overrides)
    if correct and VARIANTS[variant] is None:
        raise ConfigError(f"Variant {variant} has no error predictor; --correct needs another")
    if not correct:
        # seg.ckpt holds the segmentation network of every stage-wise variant
        variant = uncorrected_variant(variant)
    pipeline = ErrorNetPipeline.from_checkpoints(checkpoints or config.checkpoint_path, variant)
    resolution = pipeline.spec.resolution
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if correct:
        (out / "error_encoding.txt").write_text(ERROR_ENCODING_HEADER, encoding="utf-8")

    for path in _input_images(Path(image_path)):
        with Image.open(path) as original:
            size = original.size
        image, fov = read_image(path, resolution)
        sample = normalize_fov(
            Sample(
                image=image[None],
                mask=np.zeros_like(fov)[None],
                fov=fov[None],
                domain="input",
                id=path.stem,
            )
        )
        s = pipeline.segment(sample.image)
        _save_probability((s * sample.fov)[0], size, out, path.stem)
        if correct:
            assert pipeline.predictor is not None
            e_hat = predict_error(pipeline.predictor, sample.image, s)
            _save_plane(
                encode_error_map(e_hat[0]),
                size,
                out / f"{path.stem}_error.png",
                Image.Resampling.NEAREST,
            )
            s_star = apply_correction(s, e_hat) * sample.fov
            _save_probability(s_star[0], size, out, f"{path.stem}_corrected")
        console.print(f"[blue]{path.name}[/blue] -> {out}")


@cli.command()
@config_options
@click.option("--output-dir", "-o", help="Benchmark output directory")
@click.option("--seeds", help="Comma-separated seeds (default: bench_seeds)")
@click.option("--quiet", is_flag=True, help="Do not print per-epoch progress")
def bench(
    config_file: str | None,
    overrides: tuple[str, ...],
    output_dir: str | None,
    seeds: str | None,
    quiet: bool,
):
    """Train every stage on the train domain for each seed and score all variants."""
    config = load_run_config(config_file, overrides, output_dir=output_dir, bench_seeds=seeds)
    config.write_effective()
    result = run_bench(config, None if quiet else _console_type(config))

    table = Table(title="Benchmark criteria")
    table.add_column("Criterion", style="cyan")
    table.add_column("Result")
    rows = {**result.criteria(), "timing": result.timing()}
    for name, outcome in rows.items():
        status = "[green]pass[/green]" if outcome["passed"] else "[red]fail[/red]"
        details = ", ".join(
            f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
            for k, v in outcome.items()
            if k != "passed"
        )
        table.add_row(name, f"{status} {details}")
    console.print(table)
    gain = result.correction_after_joint()["gain_points"]
    console.print(f"Error correction on top of joint training: {gain:+.2f} shifted Dice points")
    console.print(f"[green]Summary written to {config.output_path / 'bench_summary.yaml'}[/green]")


@cli.command(name="show-config")
@config_options
def show_config(config_file: str | None, overrides: tuple[str, ...]):
    """Show the effective configuration."""
    if config_file and not Path(config_file).exists():
        console.print(
            Panel(
                f"[yellow]No configuration file found at: {config_file}[/yellow]",
                title="Configuration Status",
                border_style="yellow",
            )
        )
        config_file = None
    config = load_run_config(config_file, overrides)
    table = Table(title="Effective Configuration")
    table.add_column("Key", style="cyan")
    table.add_column("Value", style="green")
    for line in config.effective_lines():
        key, _, value = line.partition("=")
        table.add_row(key, value)
    console.print(table)


def main():
    """Main entry point for the CLI."""
    cli()


if __name__ == "__main__":
    main()
