from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

NUM_THRESHOLDS = 256
DEFAULT_BETA2 = 0.3


@dataclass(frozen=True)
class SaliencyMap:
    """Normalized prediction, values in [0, 1], shape (H, W)."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError(f"SaliencyMap must be 2-D, got shape {self.values.shape}")
        if self.values.size and (self.values.min() < 0 or self.values.max() > 1):
            raise ValueError("SaliencyMap values must lie in [0, 1]")

    @classmethod
    def from_uint8(cls, array: np.ndarray) -> "SaliencyMap":
        return cls(np.asarray(array, dtype=np.float64) / 255.0)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def to_uint8(self) -> np.ndarray:
        return np.rint(self.values * 255.0).astype(np.uint8)


@dataclass(frozen=True)
class GroundTruthMask:
    """Binary {0, 1} mask, shape (H, W)."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError(f"GroundTruthMask must be 2-D, got shape {self.values.shape}")
        if not np.all((self.values == 0) | (self.values == 1)):
            raise ValueError("GroundTruthMask values must be 0 or 1")

    @classmethod
    def from_uint8(cls, array: np.ndarray, threshold: int = 128) -> "GroundTruthMask":
        return cls((np.asarray(array) >= threshold).astype(np.uint8))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def positives(self) -> int:
        return int(self.values.sum())

    def to_uint8(self) -> np.ndarray:
        return (self.values * 255).astype(np.uint8)


@dataclass(frozen=True)
class PRCounts:
    """Per-threshold confusion counts; index t means "positive iff S >= t / 255"."""

    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    def __add__(self, other: "PRCounts") -> "PRCounts":
        return PRCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass
class PRCurve:
    precision: np.ndarray
    recall: np.ndarray

    def rows(self) -> List[Tuple[int, float, float]]:
        return [(t, float(p), float(r)) for t, (p, r) in enumerate(zip(self.precision, self.recall))]


@dataclass
class EvalReport:
    max_f_measure: float
    argmax_threshold: int
    mae: float
    num_images: int
    beta2: float
    curve: PRCurve
    per_image_mae: Dict[str, float] = field(default_factory=dict)
    excluded: List[str] = field(default_factory=list)
    mode: str = "aggregate"
