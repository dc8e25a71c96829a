# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""
Procedural fundus-like images with curvilinear vessels.

Each domain preset changes vessel geometry and imaging conditions so that models trained on
one preset meet a controlled shift on the others. Lengths are given in pixels at a 64 px
reference frame and scale with the requested resolution.
"""

import zlib
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from scipy import ndimage

from errornet.data.dataset import Sample
from errornet.utils.errors import ConfigError

REFERENCE_RESOLUTION = 64
FOV_RADIUS = 0.48
WALK_STEP = 0.5


@dataclass(frozen=True)
class SynthDomain:
    name: str
    vessel_count: tuple[int, int] = (4, 6)
    thickness: tuple[float, float] = (1.0, 3.0)
    curvature: float = 0.1
    contrast: float = 0.3
    central_reflex: bool = False
    reflex_brightness: float = 0.0
    noise_sigma: float = 0.03
    blur_radius: float = 0.7
    background: float = 0.5
    texture: float = 0.05
    length: tuple[float, float] = (0.6, 1.4)

    def __post_init__(self):
        lo, hi = self.vessel_count
        if lo < 0 or hi < lo:
            raise ConfigError(f"{self.name}: vessel_count range {self.vessel_count} is invalid")
        lo, hi = self.thickness
        if lo < 1.0 or hi < lo:
            raise ConfigError(f"{self.name}: thickness must satisfy 1 <= low <= high")
        lo, hi = self.length
        if lo <= 0 or hi < lo:
            raise ConfigError(f"{self.name}: length range {self.length} is invalid")
        if not 0.0 < self.contrast <= 1.0:
            raise ConfigError(f"{self.name}: contrast must lie in (0, 1], got {self.contrast}")
        if not 0.0 <= self.reflex_brightness <= 1.0:
            raise ConfigError(f"{self.name}: reflex_brightness must lie in [0, 1]")
        if not 0.0 <= self.background <= 1.0:
            raise ConfigError(f"{self.name}: background must lie in [0, 1]")
        for key in ("curvature", "noise_sigma", "blur_radius", "texture"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{self.name}: {key} must be non-negative")

    def as_dict(self) -> dict[str, Any]:
        values = asdict(self)
        for key in ("vessel_count", "thickness", "length"):
            values[key] = list(values[key])
        return values

    @classmethod
    def from_dict(cls, values: dict[str, Any]) -> "SynthDomain":
        values = dict(values)
        try:
            for key in ("vessel_count", "thickness", "length"):
                if key in values:
                    values[key] = tuple(values[key])
            return cls(**values)
        except TypeError as e:
            raise ConfigError(f"Invalid synthetic domain parameters: {e}") from e


SYNTH_PRESETS: dict[str, SynthDomain] = {
    # few thick high-contrast vessels with a bright central reflex
    "chase-like": SynthDomain(
        "chase-like",
        vessel_count=(3, 5),
        thickness=(2.0, 3.5),
        curvature=0.08,
        contrast=0.45,
        central_reflex=True,
        reflex_brightness=0.5,
        noise_sigma=0.03,
        blur_radius=0.6,
        background=0.55,
        texture=0.05,
    ),
    "drive-like": SynthDomain(
        "drive-like",
        vessel_count=(5, 8),
        thickness=(1.0, 2.5),
        curvature=0.12,
        contrast=0.3,
        noise_sigma=0.04,
        blur_radius=0.8,
        background=0.5,
        texture=0.08,
    ),
    "stare-like": SynthDomain(
        "stare-like",
        vessel_count=(4, 7),
        thickness=(1.5, 3.0),
        curvature=0.15,
        contrast=0.25,
        noise_sigma=0.06,
        blur_radius=1.0,
        background=0.6,
        texture=0.12,
    ),
    "aria-like": SynthDomain(
        "aria-like",
        vessel_count=(4, 7),
        thickness=(1.0, 2.5),
        curvature=0.1,
        contrast=0.2,
        noise_sigma=0.08,
        blur_radius=1.2,
        background=0.45,
        texture=0.1,
    ),
    "hrf-like": SynthDomain(
        "hrf-like",
        vessel_count=(6, 10),
        thickness=(1.0, 2.0),
        curvature=0.1,
        contrast=0.35,
        noise_sigma=0.02,
        blur_radius=0.5,
        background=0.5,
        texture=0.04,
    ),
}


def get_preset(name: str) -> SynthDomain:
    try:
        return SYNTH_PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"Unknown synthetic preset {name}; choose from {', '.join(SYNTH_PRESETS)}"
        ) from None


def sample_rng(domain: SynthDomain, seed: int, index: int) -> np.random.Generator:
    """Generator for one sample, independent of how many other samples are drawn."""
    return np.random.default_rng(
        np.random.SeedSequence([seed, index, zlib.crc32(domain.name.encode())])
    )


def fov_disk(resolution: int) -> np.ndarray:
    yy, xx = np.mgrid[0:resolution, 0:resolution]
    centre = (resolution - 1) / 2.0
    radius = FOV_RADIUS * resolution
    return ((yy - centre) ** 2 + (xx - centre) ** 2 <= radius**2).astype(np.float32)


def random_walk(rng: np.random.Generator, domain: SynthDomain, resolution: int) -> np.ndarray:
    """Centreline points (row, col) of one vessel, truncated where it leaves the frame."""
    scale = resolution / REFERENCE_RESOLUTION
    centre = (resolution - 1) / 2.0
    r = np.sqrt(rng.uniform()) * 0.8 * FOV_RADIUS * resolution
    angle = rng.uniform(0.0, 2.0 * np.pi)
    start = np.array([centre + r * np.sin(angle), centre + r * np.cos(angle)])

    length = rng.uniform(*domain.length) * resolution
    steps = max(2, int(length / WALK_STEP))
    heading = rng.uniform(0.0, 2.0 * np.pi) + np.cumsum(
        rng.normal(0.0, domain.curvature / np.sqrt(scale), size=steps)
    )
    moves = WALK_STEP * np.stack([np.sin(heading), np.cos(heading)], axis=1)
    points = start + np.cumsum(moves, axis=0)
    inside = np.all((points >= 0) & (points <= resolution - 1), axis=1)
    exits = np.flatnonzero(~inside)
    return points[: exits[0]] if exits.size else points


def rasterize(
    points: np.ndarray, thickness: float, resolution: int
) -> tuple[np.ndarray, np.ndarray]:
    """Vessel body within thickness/2 of the centreline and its central core."""
    centreline = np.ones((resolution, resolution), dtype=bool)
    if len(points):
        rows, cols = np.rint(points).astype(int).T
        centreline[rows, cols] = False
    if centreline.all():
        empty = np.zeros_like(centreline)
        return empty, empty
    distance = ndimage.distance_transform_edt(centreline)
    return distance <= thickness / 2.0, distance <= thickness / 6.0


def render(
    rng: np.random.Generator, domain: SynthDomain, resolution: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One (image, mask, fov) triple of H x W planes."""
    scale = resolution / REFERENCE_RESOLUTION
    fov = fov_disk(resolution)

    texture = ndimage.gaussian_filter(
        rng.normal(size=(resolution, resolution)), sigma=resolution / 8.0
    )
    spread = float(texture.std())
    if spread > 0:
        texture /= spread
    image = domain.background + domain.texture * texture

    mask = np.zeros((resolution, resolution), dtype=bool)
    core = np.zeros_like(mask)
    for _ in range(int(rng.integers(domain.vessel_count[0], domain.vessel_count[1] + 1))):
        thickness = rng.uniform(*domain.thickness) * scale
        body, centre = rasterize(random_walk(rng, domain, resolution), thickness, resolution)
        mask |= body
        if domain.central_reflex and thickness >= 2.0 * scale:
            core |= centre

    image = image - domain.contrast * mask
    if domain.central_reflex:
        image = image + domain.reflex_brightness * domain.contrast * core
    if domain.blur_radius > 0:
        image = ndimage.gaussian_filter(image, sigma=domain.blur_radius * scale)
    image = image + rng.normal(0.0, domain.noise_sigma, size=image.shape)
    image = np.clip(image, 0.0, 1.0) * fov
    return image.astype(np.float32), mask.astype(np.float32) * fov, fov


def synth_generate(
    domain: SynthDomain, n: int, resolution: int, seed: int = 0, start: int = 0
) -> list[Sample]:
    """
    `n` samples of `domain`; sample `i` depends only on (domain, seed, start + i).

    The mask is the exact rasterisation of the vessels inside the circular field of view.
    """
    if n < 0:
        raise ConfigError(f"Sample count must be >= 0, got {n}")
    samples = []
    for index in range(start, start + n):
        image, mask, fov = render(sample_rng(domain, seed, index), domain, resolution)
        samples.append(
            Sample(
                image=image[None],
                mask=mask[None],
                fov=fov[None],
                domain=domain.name,
                id=f"{domain.name}-{index:04d}",
            )
        )
    return samples


@dataclass
class CraftedBreak:
    """A straight vessel whose base segmentation is cut by a small gap."""

    sample: Sample
    segmentation: np.ndarray
    gap_columns: list[int] = field(default_factory=list)


def craft_broken_vessel(
    resolution: int = 64,
    gap: int = 3,
    thickness: int = 3,
    domain: SynthDomain | None = None,
    seed: int = 0,
) -> CraftedBreak:
    """
    Horizontal vessel through the image centre; the provided segmentation (1 x H x W
    probabilities) misses `gap` columns in the middle, splitting it into two components.
    """
    domain = domain or SYNTH_PRESETS["chase-like"]
    if gap < 1 or thickness < 1 or gap >= resolution // 2:
        raise ConfigError(f"Invalid crafted break: gap={gap}, thickness={thickness}")
    rng = sample_rng(domain, seed, 0)
    fov = fov_disk(resolution)
    top = resolution // 2 - thickness // 2
    mask = np.zeros((resolution, resolution), dtype=np.float32)
    mask[top : top + thickness, :] = 1.0
    mask *= fov

    image = np.full((resolution, resolution), domain.background) - domain.contrast * mask
    if domain.blur_radius > 0:
        image = ndimage.gaussian_filter(image, sigma=domain.blur_radius)
    image = np.clip(image + rng.normal(0.0, domain.noise_sigma, size=image.shape), 0.0, 1.0)

    left = resolution // 2 - gap // 2
    columns = list(range(left, left + gap))
    segmentation = np.where(mask > 0, 0.9, 0.05).astype(np.float32)
    segmentation[:, columns] = 0.05
    segmentation *= fov
    sample = Sample(
        image=(image * fov).astype(np.float32)[None],
        mask=mask[None],
        fov=fov[None],
        domain=domain.name,
        id="crafted-break",
    )
    return CraftedBreak(sample=sample, segmentation=segmentation[None], gap_columns=columns)
