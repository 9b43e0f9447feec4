"""Robustness transforms: SNR-targeted Gaussian noise, right-angle
rotations, and area-fraction random crops.

Noise is applied in normalized [0, 1] space. Signal power is the mean
squared intensity of the original image; the noise variance is chosen as
P / 10^(snr/10), so the realized pre-clamp SNR concentrates tightly
around the target for any image of reasonable size. Clamping (on by
default) biases realized noise at low SNR, which is why calibration is
stated pre-clamp.

Every transform is a deterministic function of (input image, spec): the
random stream is keyed on the spec seed and the image digest.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
import numpy as np

from .imagery import ImageRecord

SNR_SWEEP_DB = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
ROTATIONS_DEG = (90, 180, 270)
DEFAULT_CROP_FRACTION = 0.30


class InvalidAngle(ValueError):
    pass


class DegenerateBox(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float
    seed: int = 0
    clamp: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.snr_db <= 60.0:
            raise ValueError(f"snr_db must be within [0, 60], got {self.snr_db}")


@dataclass(frozen=True)
class AugSpec:
    rotations: tuple[int, ...] = ROTATIONS_DEG
    crop_fraction: float = DEFAULT_CROP_FRACTION
    seed: int = 0

    def __post_init__(self) -> None:
        for angle in self.rotations:
            if angle not in ROTATIONS_DEG:
                raise InvalidAngle(f"rotation must be one of {ROTATIONS_DEG}, got {angle}")
        if not 0.0 < self.crop_fraction <= 1.0:
            raise ValueError(f"crop_fraction must be in (0, 1], got {self.crop_fraction}")


def _rng_for(seed: int, image_id: str, tag: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}|{tag}|{image_id}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def add_gaussian_noise(image: ImageRecord, spec: NoiseSpec) -> tuple[ImageRecord, float]:
    """Add white Gaussian noise at the target SNR.

    Returns the noisy record and the realized pre-clamp SNR in dB.
    """
    pixels = image.pixels.astype(np.float64) / 255.0
    if pixels.size == 0:
        raise ValueError("empty image")
    signal_power = float(np.mean(pixels ** 2))
    noise_power = signal_power / (10.0 ** (spec.snr_db / 10.0))
    rng = _rng_for(spec.seed, image.image_id, "noise")
    noise = rng.normal(0.0, math.sqrt(noise_power), size=pixels.shape)
    realized_db = 10.0 * math.log10(signal_power / float(np.mean(noise ** 2)))
    noisy = pixels + noise
    if spec.clamp:
        noisy = np.clip(noisy, 0.0, 1.0)
    out = np.round(noisy * 255.0).astype(np.uint8)
    record = ImageRecord.from_pixels(out, source=image.source, request=image.request)
    return record, realized_db


def rotate(image: ImageRecord, degrees: int) -> ImageRecord:
    """Lossless right-angle rotation; 180 twice (or 90 four times) is the
    identity."""
    if degrees not in ROTATIONS_DEG:
        raise InvalidAngle(f"rotation must be one of {ROTATIONS_DEG}, got {degrees}")
    rotated = np.rot90(image.pixels, k=degrees // 90)
    return ImageRecord.from_pixels(rotated, source=image.source, request=image.request)


def random_crop(image: ImageRecord, bbox: tuple[int, int, int, int],
                fraction: float = DEFAULT_CROP_FRACTION,
                seed: int = 0) -> tuple[ImageRecord, tuple[int, int, int, int]]:
    """Crop a window of `fraction` of the bbox area, placed uniformly at
    random inside the bbox.

    The window keeps the bbox aspect ratio (side = round(side * sqrt(f)))
    and is returned with the bbox re-expressed in window coordinates.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    height, width = image.pixels.shape[:2]
    xmin, ymin, xmax, ymax = (int(v) for v in bbox)
    if not (0 <= xmin < xmax <= width and 0 <= ymin < ymax <= height):
        raise DegenerateBox(f"bbox {bbox} invalid for {width}x{height} image")

    box_w, box_h = xmax - xmin, ymax - ymin
    scale = math.sqrt(fraction)
    crop_w = max(1, round(box_w * scale))
    crop_h = max(1, round(box_h * scale))

    rng = _rng_for(seed, image.image_id, "crop")
    x0 = xmin + int(rng.integers(0, box_w - crop_w + 1))
    y0 = ymin + int(rng.integers(0, box_h - crop_h + 1))

    window = image.pixels[y0:y0 + crop_h, x0:x0 + crop_w]
    record = ImageRecord.from_pixels(window, source=image.source, request=image.request)
    adjusted = (max(xmin, x0) - x0, max(ymin, y0) - y0,
                min(xmax, x0 + crop_w) - x0, min(ymax, y0 + crop_h) - y0)
    return record, adjusted
