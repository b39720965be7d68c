"""Augmentation configuration types and distractor image pools."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from ..core.rng import RNGPolicy
from ..errors import (
    ConfigurationError,
    InvalidParameterError,
    MissingDistractorError,
    ShapeError,
)
from ..imageops import bilinear_resize, to_uint8
from ..noise import noise_frame_u8

AUGMENTATION_KINDS = ("none", "shift", "jitter", "overlay", "composite")


@dataclass(frozen=True)
class JitterParams:
    """Photometric jitter magnitudes.

    Factors are drawn per sample: brightness/contrast/saturation from
    [max(0, 1 - m), 1 + m], hue offset from [-hue, hue] fractions of the
    color circle. hue must not exceed 0.5, half a full rotation.
    """

    brightness: float = 0.4
    contrast: float = 0.4
    saturation: float = 0.4
    hue: float = 0.5

    def __post_init__(self) -> None:
        for name in ("brightness", "contrast", "saturation", "hue"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise InvalidParameterError(f"jitter {name} must be finite and >= 0, got {v}")
        if self.hue > 0.5:
            raise InvalidParameterError(f"jitter hue must be <= 0.5, got {self.hue}")

    @property
    def is_identity(self) -> bool:
        return self.brightness == 0.0 and self.contrast == 0.0 and self.saturation == 0.0 and self.hue == 0.0


@dataclass(frozen=True)
class AugmentationSpec:
    """Declarative description of an augmentation pipeline.

    kind is one of none | shift | jitter | overlay | composite. composite
    applies ``children`` left to right. ``stream`` namespaces the random
    draws so two specs sharing one policy stay decorrelated.
    """

    kind: str = "none"
    pad: int = 4
    jitter: JitterParams = field(default_factory=JitterParams)
    alpha: float = 0.5
    distractors: "DistractorSource | None" = None
    children: tuple["AugmentationSpec", ...] = ()
    stream: str = "aug"
    rng: RNGPolicy | None = None

    def __post_init__(self) -> None:
        if self.kind not in AUGMENTATION_KINDS:
            raise ConfigurationError(
                f"unknown augmentation kind {self.kind!r}, expected one of {AUGMENTATION_KINDS}"
            )
        if self.pad < 0:
            raise InvalidParameterError(f"shift pad must be >= 0, got {self.pad}")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidParameterError(f"overlay alpha must lie in [0, 1], got {self.alpha}")
        if self.kind == "composite" and not self.children:
            raise ConfigurationError("composite augmentation requires at least one child")
        if self.kind != "composite" and self.children:
            raise ConfigurationError(f"kind {self.kind!r} does not accept children")


class DistractorSource:
    """Pool of RGB distractor images sampled uniformly for overlay."""

    def __init__(self, images: np.ndarray):
        images = np.asarray(images)
        if images.ndim != 4 or images.shape[1] != 3:
            raise ShapeError(f"distractor pool must be [K, 3, H, W], got {images.shape}")
        if images.shape[0] == 0:
            raise MissingDistractorError("distractor pool is empty")
        if images.dtype != np.uint8:
            images = to_uint8(images)
        self.images = images
        self.images.setflags(write=False)

    def __len__(self) -> int:
        return int(self.images.shape[0])

    @property
    def frame_hw(self) -> tuple[int, int]:
        return int(self.images.shape[2]), int(self.images.shape[3])

    @classmethod
    def from_noise(
        cls,
        count: int,
        hw: tuple[int, int],
        seed: int = 0,
        octaves: int = 3,
        base_cells: int = 3,
    ) -> "DistractorSource":
        """Generate ``count`` procedural texture images at resolution ``hw``."""
        if count < 1:
            raise MissingDistractorError(f"distractor pool needs count >= 1, got {count}")
        rng = RNGPolicy(seed)
        h, w = hw
        pool = np.stack(
            [noise_frame_u8(rng, f"distractors/{i}", h, w, octaves=octaves, base_cells=base_cells)
             for i in range(count)]
        )
        return cls(pool)

    @classmethod
    def from_directory(cls, path: str, hw: tuple[int, int]) -> "DistractorSource":
        """Load every PNG/JPEG under ``path``, resized to ``hw``."""
        import matplotlib.image as mpimg

        names = sorted(
            f for f in os.listdir(path) if f.lower().endswith((".png", ".jpg", ".jpeg"))
        )
        if not names:
            raise MissingDistractorError(f"no images found under {path!r}")
        h, w = hw
        frames = []
        for name in names:
            img = mpimg.imread(os.path.join(path, name))
            if img.dtype == np.uint8:
                img = img.astype(np.float64) / 255.0
            if img.ndim == 2:
                img = np.repeat(img[:, :, None], 3, axis=2)
            img = img[:, :, :3].transpose(2, 0, 1)
            frames.append(to_uint8(bilinear_resize(img.astype(np.float64), (h, w))))
        return cls(np.stack(frames))

    def sample_indices(self, rng: RNGPolicy, stream: str, counters: np.ndarray) -> np.ndarray:
        return rng.integers(stream, counters, 0, len(self), draw=0)
