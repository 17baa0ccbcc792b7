from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np

from app.modules.evaluation.models import GroundTruthMask
from core.managers.config_manager import ConfigValidationError

IMAGENET_MEANS = (0.485, 0.456, 0.406)
SHAPE_KINDS = ("ellipse", "rectangle", "triangle")
SIZE_MULTIPLE = 32


@dataclass(frozen=True)
class Sample:
    """A normalized (1, 3, H, W) image paired with its binary mask."""

    image: np.ndarray
    mask: GroundTruthMask
    stem: str

    def __post_init__(self):
        if self.image.ndim != 4 or self.image.shape[:2] != (1, 3):
            raise ValueError(f"Sample '{self.stem}': image must be (1, 3, H, W), got {self.image.shape}")
        height, width = self.image.shape[2:]
        if (height, width) != self.mask.shape:
            raise ValueError(f"Sample '{self.stem}': image {height}x{width} and mask {self.mask.shape} differ")
        if height % SIZE_MULTIPLE or width % SIZE_MULTIPLE:
            raise ValueError(f"Sample '{self.stem}': {height}x{width} is not divisible by {SIZE_MULTIPLE}")

    @property
    def height(self) -> int:
        return self.image.shape[2]

    @property
    def width(self) -> int:
        return self.image.shape[3]

    def target(self, dtype=np.float64) -> np.ndarray:
        return self.mask.values.astype(dtype)[None, None]

    def renamed(self, stem: str) -> "Sample":
        return replace(self, stem=stem)


@dataclass(frozen=True)
class SyntheticSpec:
    count: int = 200
    size: int = 64
    seed: int = 0
    shapes_per_image: Tuple[int, int] = (1, 3)
    shape_kinds: Tuple[str, ...] = SHAPE_KINDS
    contrast: Tuple[float, float] = (0.25, 0.6)
    noise_amplitude: float = 0.08
    min_coverage: float = 0.01
    max_coverage: float = 0.60
    max_attempts: int = 100
    stem_prefix: str = field(default="img")

    def validate(self):
        if self.count < 1:
            raise ConfigValidationError(f"count must be >= 1, got {self.count}")
        if self.size < 64 or self.size % SIZE_MULTIPLE:
            raise ConfigValidationError(f"size must be >= 64 and divisible by {SIZE_MULTIPLE}, got {self.size}")
        low, high = self.shapes_per_image
        if not 1 <= low <= high:
            raise ConfigValidationError(f"shapes_per_image must satisfy 1 <= low <= high, got {self.shapes_per_image}")
        unknown = set(self.shape_kinds) - set(SHAPE_KINDS)
        if not self.shape_kinds or unknown:
            raise ConfigValidationError(f"shape_kinds must be drawn from {SHAPE_KINDS}, got {self.shape_kinds}")
        if not 0 < self.contrast[0] <= self.contrast[1] <= 1:
            raise ConfigValidationError(f"contrast range must lie in (0, 1], got {self.contrast}")
        if self.noise_amplitude < 0:
            raise ConfigValidationError("noise_amplitude must be non-negative")
