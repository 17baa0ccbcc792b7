import os
import re
from typing import List, Tuple

import numpy as np

from core.repositories.BaseRepository import BaseRepository

MAXVAL = 255
_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


class NetpbmFormatError(ValueError):
    pass


def parse_header(payload: bytes, magic: bytes, source: str) -> Tuple[int, int, int]:
    """Width, height and offset of the raster for a binary PGM (P5) or PPM (P6) file."""
    tokens = []
    offset = 0
    while len(tokens) < 4:
        match = _TOKEN.match(payload, offset)
        if match is None:
            raise NetpbmFormatError(f"{source}: truncated header after {len(tokens)} fields")
        tokens.append(match.group(1))
        offset = match.end()
    if tokens[0] != magic:
        raise NetpbmFormatError(f"{source}: expected magic {magic.decode()}, got {tokens[0][:8]!r}")
    try:
        width, height, maxval = (int(token) for token in tokens[1:])
    except ValueError as exc:
        raise NetpbmFormatError(f"{source}: non-numeric header field ({exc})") from exc
    if maxval != MAXVAL:
        raise NetpbmFormatError(f"{source}: maxval must be {MAXVAL}, got {maxval}")
    if width <= 0 or height <= 0:
        raise NetpbmFormatError(f"{source}: invalid dimensions {width}x{height}")
    if offset >= len(payload) or not payload[offset : offset + 1].isspace():
        raise NetpbmFormatError(f"{source}: missing whitespace after maxval")
    return width, height, offset + 1


def decode_raster(payload: bytes, magic: bytes, channels: int, source: str) -> np.ndarray:
    width, height, start = parse_header(payload, magic, source)
    expected = width * height * channels
    raster = payload[start:]
    if len(raster) != expected:
        raise NetpbmFormatError(f"{source}: raster has {len(raster)} bytes, header implies {expected}")
    array = np.frombuffer(raster, dtype=np.uint8)
    return array.reshape(height, width, channels) if channels > 1 else array.reshape(height, width)


def encode_raster(array: np.ndarray, magic: bytes) -> bytes:
    array = np.ascontiguousarray(array, dtype=np.uint8)
    height, width = array.shape[:2]
    return magic + b"\n" + f"{width} {height}\n{MAXVAL}\n".encode("ascii") + array.tobytes()


class PPMRepository(BaseRepository[np.ndarray]):
    """Binary PPM (P6, maxval 255) as (H, W, 3) uint8 arrays."""

    extension = ".ppm"

    def encode(self, item: np.ndarray) -> bytes:
        if item.ndim != 3 or item.shape[2] != 3:
            raise ValueError(f"PPM needs an (H, W, 3) array, got {item.shape}")
        return encode_raster(item, b"P6")

    def decode(self, payload: bytes, source: str = "<bytes>") -> np.ndarray:
        return decode_raster(payload, b"P6", 3, source)


class PGMRepository(BaseRepository[np.ndarray]):
    """Binary PGM (P5, maxval 255) as (H, W) uint8 arrays."""

    extension = ".pgm"

    def encode(self, item: np.ndarray) -> bytes:
        if item.ndim != 2:
            raise ValueError(f"PGM needs an (H, W) array, got {item.shape}")
        return encode_raster(item, b"P5")

    def decode(self, payload: bytes, source: str = "<bytes>") -> np.ndarray:
        return decode_raster(payload, b"P5", 1, source)


class DatasetRepository:
    """`<root>/images/<stem>.ppm` paired with `<root>/masks/<stem>.pgm`."""

    def __init__(self):
        self.images = PPMRepository()
        self.masks = PGMRepository()

    def image_dir(self, root: str) -> str:
        return os.path.join(root, "images")

    def mask_dir(self, root: str) -> str:
        return os.path.join(root, "masks")

    def image_path(self, root: str, stem: str) -> str:
        return self.images.path_for(self.image_dir(root), stem)

    def mask_path(self, root: str, stem: str) -> str:
        return self.masks.path_for(self.mask_dir(root), stem)

    def stems(self, root: str) -> List[str]:
        image_stems = self.images.list_stems(self.image_dir(root))
        mask_stems = self.masks.list_stems(self.mask_dir(root))
        orphans = sorted(set(image_stems) ^ set(mask_stems))
        if orphans:
            raise ValueError(f"Dataset {root}: images and masks do not pair up, orphans: {orphans}")
        return image_stems

    def write_pair(self, root: str, stem: str, image: np.ndarray, mask: np.ndarray):
        self.images.save(image, self.image_path(root, stem))
        self.masks.save(mask, self.mask_path(root, stem))
