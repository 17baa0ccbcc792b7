import logging
import os
import zlib
from typing import List

import numpy as np

from app.modules.dataset.models import IMAGENET_MEANS, SIZE_MULTIPLE, Sample, SyntheticSpec
from app.modules.dataset.repositories import DatasetRepository
from app.modules.evaluation.models import GroundTruthMask
from core.services.BaseService import BaseService

logger = logging.getLogger(__name__)

FLIP_SUFFIX = "_flip"


def normalize_image(pixels: np.ndarray, dtype=np.float64) -> np.ndarray:
    """(H, W, 3) uint8 -> (1, 3, H, W) scaled to [0, 1] and mean-centered per channel."""
    scaled = pixels.astype(np.float64) / 255.0 - np.asarray(IMAGENET_MEANS)
    return np.ascontiguousarray(scaled.transpose(2, 0, 1)[None]).astype(dtype)


def pad_to_multiple(array: np.ndarray, multiple: int = SIZE_MULTIPLE) -> np.ndarray:
    """Reflect-pad the bottom and right edges of an (N, C, H, W) array up to the next multiple."""
    height, width = array.shape[-2:]
    pad_h, pad_w = (-height) % multiple, (-width) % multiple
    if not pad_h and not pad_w:
        return array
    return np.pad(array, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)), mode="reflect")


def crop_to(array: np.ndarray, height: int, width: int) -> np.ndarray:
    return np.ascontiguousarray(array[..., :height, :width])


def flip_horizontal(sample: Sample) -> Sample:
    return Sample(
        image=np.ascontiguousarray(sample.image[..., ::-1]),
        mask=GroundTruthMask(np.ascontiguousarray(sample.mask.values[:, ::-1])),
        stem=sample.stem,
    )


def stem_seed(seed: int, stem: str) -> int:
    return (seed ^ zlib.crc32(stem.encode("utf-8"))) & 0xFFFFFFFF


class DatasetService(BaseService):
    def __init__(self):
        super().__init__(DatasetRepository())

    # --------------------
    # Ingestion
    # --------------------

    def load_image(self, image_path: str, dtype=np.float64) -> np.ndarray:
        return normalize_image(self.repository.images.load(image_path), dtype=dtype)

    def load_sample(self, image_path: str, mask_path: str, dtype=np.float64) -> Sample:
        pixels = self.repository.images.load(image_path)
        mask = GroundTruthMask.from_uint8(self.repository.masks.load(mask_path))
        height, width = pixels.shape[:2]
        if height % SIZE_MULTIPLE or width % SIZE_MULTIPLE:
            raise ValueError(
                f"{image_path}: {height}x{width} is not divisible by {SIZE_MULTIPLE}; "
                f"pad to {height + (-height) % SIZE_MULTIPLE}x{width + (-width) % SIZE_MULTIPLE}"
            )
        if mask.shape != (height, width):
            raise ValueError(f"{mask_path}: mask {mask.shape} does not match image {height}x{width}")
        stem = os.path.splitext(os.path.basename(image_path))[0]
        return Sample(image=normalize_image(pixels, dtype=dtype), mask=mask, stem=stem)

    def load_dataset(self, root: str, augment: bool = False, dtype=np.float64) -> List[Sample]:
        samples = []
        for stem in self.repository.stems(root):
            sample = self.load_sample(self.repository.image_path(root, stem), self.repository.mask_path(root, stem), dtype)
            samples.append(sample)
            if augment:
                samples.append(flip_horizontal(sample).renamed(f"{stem}{FLIP_SUFFIX}"))
        if not samples:
            raise ValueError(f"Dataset {root} contains no image/mask pairs")
        logger.info("Loaded %d samples from %s (augment=%s)", len(samples), root, augment)
        return samples

    # --------------------
    # Synthetic data
    # --------------------

    def render_synthetic(self, spec: SyntheticSpec, stem: str):
        """Deterministic (image uint8 (H, W, 3), mask uint8 (H, W)) for one stem."""
        rng = np.random.default_rng(stem_seed(spec.seed, stem))
        size = spec.size
        ys, xs = np.mgrid[0:size, 0:size] + 0.5

        for _ in range(spec.max_attempts):
            mask = np.zeros((size, size), dtype=bool)
            for _shape in range(int(rng.integers(spec.shapes_per_image[0], spec.shapes_per_image[1] + 1))):
                kind = spec.shape_kinds[int(rng.integers(len(spec.shape_kinds)))]
                mask |= _draw_shape(kind, xs, ys, size, rng)
            coverage = mask.mean()
            if spec.min_coverage <= coverage <= spec.max_coverage:
                break
        else:
            raise RuntimeError(f"{stem}: no shape layout within coverage bounds after {spec.max_attempts} attempts")

        background = rng.uniform(0.2, 0.8, size=3)
        contrast = rng.uniform(*spec.contrast)
        direction = 1.0 if background.mean() < 0.5 else -1.0
        foreground = np.clip(background + direction * contrast, 0.0, 1.0)

        cells = size // 8
        coarse = np.kron(rng.normal(size=(cells, cells, 3)), np.ones((8, 8, 1)))
        fine = rng.normal(size=(size, size, 3))
        texture = spec.noise_amplitude * (coarse + 0.5 * fine)

        canvas = np.where(mask[..., None], foreground, background) + texture
        image = np.rint(np.clip(canvas, 0.0, 1.0) * 255.0).astype(np.uint8)
        return image, mask.astype(np.uint8) * 255

    def generate_synthetic(self, spec: SyntheticSpec, out_dir: str) -> List[str]:
        spec.validate()
        stems = [f"{spec.stem_prefix}{index:05d}" for index in range(spec.count)]
        for stem in stems:
            image, mask = self.render_synthetic(spec, stem)
            self.repository.write_pair(out_dir, stem, image, mask)
        logger.info("Wrote %d synthetic pairs of %dx%d to %s", len(stems), spec.size, spec.size, out_dir)
        return stems


def _draw_shape(kind: str, xs: np.ndarray, ys: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    cx, cy = rng.uniform(0.2 * size, 0.8 * size, size=2)
    radius = rng.uniform(0.08 * size, 0.25 * size)
    angle = rng.uniform(0, np.pi)
    cos, sin = np.cos(angle), np.sin(angle)
    u = (xs - cx) * cos + (ys - cy) * sin
    v = -(xs - cx) * sin + (ys - cy) * cos

    if kind == "ellipse":
        aspect = rng.uniform(0.5, 1.0)
        return (u / radius) ** 2 + (v / (radius * aspect)) ** 2 <= 1.0
    if kind == "rectangle":
        aspect = rng.uniform(0.4, 1.0)
        return (np.abs(u) <= radius) & (np.abs(v) <= radius * aspect)
    if kind == "triangle":
        corners = angle + np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3]) + rng.uniform(-0.3, 0.3, size=3)
        radii = radius * rng.uniform(0.8, 1.2, size=3)
        px, py = cx + radii * np.cos(corners), cy + radii * np.sin(corners)
        signs = []
        for a in range(3):
            b = (a + 1) % 3
            signs.append((px[b] - px[a]) * (ys - py[a]) - (py[b] - py[a]) * (xs - px[a]))
        return ((signs[0] >= 0) & (signs[1] >= 0) & (signs[2] >= 0)) | ((signs[0] <= 0) & (signs[1] <= 0) & (signs[2] <= 0))
    raise ValueError(f"Unknown shape kind '{kind}'")
