# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Vessel datasets on disk: loading, splitting, field-of-view normalisation and batching."""

import logging
import queue
import threading
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from errornet.autodiff.tensor import Tensor
from errornet.utils.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".pgm", ".ppm", ".gif", ".tif", ".tiff")
FOV_BACKGROUND_LEVEL = 10
SPLIT_NAMES = ("train", "val", "test")


@dataclass
class Sample:
    """
    One image with its vessel mask and field of view, each shaped 1 x H x W.

    `image` holds intensities in [0, 1] until `normalize_fov` z-scores it.
    """

    image: np.ndarray
    mask: np.ndarray
    fov: np.ndarray
    domain: str
    id: str
    split: str = ""

    def __post_init__(self):
        shapes = {self.image.shape, self.mask.shape, self.fov.shape}
        if len(shapes) != 1 or self.image.ndim != 3 or self.image.shape[0] != 1:
            raise DataError(
                f"Sample {self.id}: image, mask and fov must share a 1 x H x W shape, "
                f"got {self.image.shape}, {self.mask.shape}, {self.fov.shape}"
            )
        if np.any((self.mask > 0) & (self.fov == 0)):
            raise DataError(f"Sample {self.id}: mask has vessel pixels outside the field of view")

    @property
    def resolution(self) -> int:
        return self.image.shape[-1]


@dataclass(frozen=True)
class SplitSpec:
    train: int
    val: int
    test: int

    @property
    def total(self) -> int:
        return self.train + self.val + self.test

    def assign(self, ids: Sequence[str], seed: int = 0) -> dict[str, str]:
        """Map every id to a split name; the permutation depends only on `seed`."""
        if len(ids) != self.total:
            raise ConfigError(
                f"Split {self.train}/{self.val}/{self.test} covers {self.total} samples, "
                f"found {len(ids)}"
            )
        order = np.random.default_rng(seed).permutation(len(ids))
        bounds = np.cumsum([self.train, self.val])
        assignment = {}
        for position, index in enumerate(order):
            split = SPLIT_NAMES[int(np.searchsorted(bounds, position, side="right"))]
            assignment[ids[index]] = split
        return assignment


# Published train / val / test partitions of the five fundus datasets.
STANDARD_SPLITS: dict[str, SplitSpec] = {
    "drive": SplitSpec(18, 2, 20),
    "stare": SplitSpec(10, 2, 8),
    "chase": SplitSpec(17, 5, 6),
    "aria": SplitSpec(121, 5, 17),
    "hrf": SplitSpec(26, 5, 14),
}


@dataclass
class DatasetSplits:
    train: list[Sample]
    val: list[Sample]
    test: list[Sample]

    @classmethod
    def from_samples(cls, samples: Sequence[Sample]) -> "DatasetSplits":
        parts: dict[str, list[Sample]] = {name: [] for name in SPLIT_NAMES}
        for sample in samples:
            if sample.split not in parts:
                raise DataError(f"Sample {sample.id} has no split assignment")
            parts[sample.split].append(sample)
        return cls(**parts)

    @classmethod
    def from_counts(cls, samples: Sequence[Sample], split: SplitSpec) -> "DatasetSplits":
        """Take consecutive runs of an already random sequence (synthetic data)."""
        if len(samples) != split.total:
            raise ConfigError(f"Expected {split.total} samples, got {len(samples)}")
        bounds = (0, split.train, split.train + split.val, split.total)
        parts = [
            [replace(s, split=name) for s in samples[start:stop]]
            for name, start, stop in zip(SPLIT_NAMES, bounds, bounds[1:], strict=False)
        ]
        return cls(*parts)

    def normalized(self) -> "DatasetSplits":
        return DatasetSplits(
            [normalize_fov(s) for s in self.train],
            [normalize_fov(s) for s in self.val],
            [normalize_fov(s) for s in self.test],
        )


def _image_files(directory: Path) -> dict[str, Path]:
    """Supported image files of a directory keyed by stem (first suffix wins)."""
    files: dict[str, Path] = {}
    for path in sorted(directory.glob("*")):
        if path.is_file() and path.suffix.lower() in IMAGE_SUFFIXES:
            files.setdefault(path.stem, path)
    return files


def _open(path: Path) -> Image.Image:
    try:
        image = Image.open(path)
        image.load()
    except (OSError, UnidentifiedImageError) as e:
        raise DataError(f"Cannot read image {path}: {e}") from e
    return image


def _resize(plane: np.ndarray, resolution: int, resample: Image.Resampling) -> np.ndarray:
    if plane.shape == (resolution, resolution):
        return plane.astype(np.float32)
    resized = Image.fromarray(plane.astype(np.float32)).resize(
        (resolution, resolution), resample=resample
    )
    return np.asarray(resized, dtype=np.float32)


def read_image(path: Path, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Single-channel intensities in [0, 1] and a derived field of view, both resized.

    RGB images contribute their green channel. The field of view excludes pixels darker
    than 10/255 on every channel.
    """
    image = _open(path)
    if image.mode not in ("L", "RGB"):
        image = image.convert("RGB")
    pixels = np.asarray(image, dtype=np.float32)
    if pixels.ndim == 3:
        fov = np.any(pixels >= FOV_BACKGROUND_LEVEL, axis=-1)
        plane = pixels[..., 1]
    else:
        fov = pixels >= FOV_BACKGROUND_LEVEL
        plane = pixels
    plane = _resize(plane / 255.0, resolution, Image.Resampling.BILINEAR)
    fov = _resize(fov.astype(np.float32), resolution, Image.Resampling.NEAREST)
    return np.clip(plane, 0.0, 1.0), (fov > 0.5).astype(np.float32)


def read_mask(path: Path, resolution: int) -> np.ndarray:
    plane = np.asarray(_open(path).convert("L"), dtype=np.float32) >= 128
    return (_resize(plane.astype(np.float32), resolution, Image.Resampling.NEAREST) > 0.5).astype(
        np.float32
    )


def load_dataset(
    root: str | Path, domain: str, split: SplitSpec, resolution: int, seed: int = 0
) -> list[Sample]:
    """
    Read `<root>/<domain>/{images,masks,fov}` into samples tagged with their split.

    Files are paired by stem. A missing fov file falls back to the near-black threshold.
    Vessel pixels outside the field of view are dropped from the mask.
    """
    directory = Path(root) / domain
    image_dir = directory / "images"
    images = _image_files(image_dir)
    masks = _image_files(directory / "masks")
    fovs = _image_files(directory / "fov")
    stems = sorted(images)
    if not stems:
        raise DataError(f"No samples in {image_dir}")

    assignment = split.assign(stems, seed)
    samples = []
    for stem in stems:
        image, derived_fov = read_image(images[stem], resolution)
        if stem not in masks:
            raise DataError(f"No mask for image {stem} in {directory / 'masks'}")
        mask = read_mask(masks[stem], resolution)
        fov = read_mask(fovs[stem], resolution) if stem in fovs else derived_fov
        outside = int(np.count_nonzero((mask > 0) & (fov == 0)))
        if outside:
            logger.debug("%s/%s: dropping %d mask pixels outside the fov", domain, stem, outside)
        samples.append(
            Sample(
                image=image[None],
                mask=(mask * fov)[None],
                fov=fov[None],
                domain=domain,
                id=stem,
                split=assignment[stem],
            )
        )
    logger.info("Loaded %d samples of %s from %s", len(samples), domain, directory)
    return samples


def write_dataset(samples: Sequence[Sample], root: str | Path) -> Path:
    """Write samples as 8-bit PNGs in the layout `load_dataset` reads."""
    root = Path(root)
    for sample in samples:
        directory = root / sample.domain
        planes = {
            "images": np.clip(sample.image[0], 0.0, 1.0) * 255.0,
            "masks": sample.mask[0] * 255.0,
            "fov": sample.fov[0] * 255.0,
        }
        for sub, plane in planes.items():
            try:
                (directory / sub).mkdir(parents=True, exist_ok=True)
                Image.fromarray(np.rint(plane).astype(np.uint8)).save(
                    directory / sub / f"{sample.id}.png"
                )
            except OSError as e:
                raise DataError(f"Cannot write {directory / sub}: {e.strerror}") from e
    return root


def normalize_fov(sample: Sample) -> Sample:
    """Z-score the image with statistics of the field-of-view pixels; zero outside it."""
    inside = sample.fov > 0
    if not inside.any():
        raise DataError(f"Sample {sample.id}: field of view is empty")
    values = sample.image[inside].astype(np.float64)
    std = float(values.std())
    if std < 1e-12:
        raise DataError(f"Sample {sample.id}: degenerate image, zero variance inside the fov")
    image = np.where(inside, (sample.image - values.mean()) / std, 0.0)
    return replace(sample, image=image.astype(np.float32))


def binarize(prob: np.ndarray | Tensor, threshold: float = 0.5) -> np.ndarray:
    data = prob.data if isinstance(prob, Tensor) else np.asarray(prob)
    return (data >= threshold).astype(np.float32)


@dataclass
class Batch:
    images: np.ndarray
    masks: np.ndarray
    fovs: np.ndarray
    ids: list[str]

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def stack(cls, samples: Sequence[Sample]) -> "Batch":
        return cls(
            images=np.stack([s.image for s in samples]),
            masks=np.stack([s.mask for s in samples]),
            fovs=np.stack([s.fov for s in samples]),
            ids=[s.id for s in samples],
        )


_END = object()


def iter_batches(
    samples: Sequence[Sample],
    batch_size: int,
    seed: int = 0,
    epoch: int = 0,
    shuffle: bool = True,
    prefetch: int = 0,
) -> Iterator[Batch]:
    """
    Mini-batches in an order fixed by (seed, epoch); the last batch may be smaller.

    With `prefetch > 0` a background thread stacks up to that many batches ahead.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    n = len(samples)
    order = np.random.default_rng([seed, epoch]).permutation(n) if shuffle else np.arange(n)
    batches = (
        Batch.stack([samples[i] for i in order[start : start + batch_size]])
        for start in range(0, n, batch_size)
    )
    if prefetch <= 0:
        yield from batches
        return

    buffer: queue.Queue[object] = queue.Queue(maxsize=prefetch)
    stop = threading.Event()

    def produce() -> None:
        try:
            for batch in batches:
                if stop.is_set():
                    return
                buffer.put(batch)
        except Exception as e:  # surfaced in the consumer
            buffer.put(e)
        finally:
            buffer.put(_END)

    worker = threading.Thread(target=produce, name="errornet-prefetch", daemon=True)
    worker.start()
    try:
        while (item := buffer.get()) is not _END:
            if isinstance(item, Exception):
                raise item
            yield item  # type: ignore[misc]
    finally:
        stop.set()
        while worker.is_alive():
            try:
                buffer.get_nowait()
            except queue.Empty:
                worker.join(timeout=0.01)
