import logging
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from src.utils.errors import InputError

logger = logging.getLogger(__name__)

IMAGE_SIZE = 224
IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


def load_raster(path: Union[str, Path]) -> np.ndarray:
    """Decode any Pillow-readable file into an H x W x 3 uint8 RGB array"""
    path = Path(path)
    if not path.exists():
        raise InputError(f"image not found: {path}")
    try:
        with Image.open(path) as image:
            return np.asarray(image.convert('RGB'), dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise InputError(f"cannot decode image {path}: {exc}") from exc


def preprocess_image(pixels: np.ndarray, size: int = IMAGE_SIZE) -> np.ndarray:
    """
    Bilinear resize to size x size, scale to [0, 1], normalize each channel with the
    ImageNet mean/std. Returns float32 [3, size, size].
    """
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise InputError(f"expected an H x W x 3 RGB raster, got shape {pixels.shape}")
    if pixels.shape[0] == 0 or pixels.shape[1] == 0:
        raise InputError("image raster is empty")

    channels = []
    for c in range(3):
        plane = Image.fromarray(pixels[:, :, c].astype(np.float32), mode='F')
        if plane.size != (size, size):
            plane = plane.resize((size, size), resample=Image.Resampling.BILINEAR)
        channels.append(np.asarray(plane, dtype=np.float32))
    scaled = np.stack(channels, axis=0) / np.float32(255.0)
    normalized = (scaled - IMAGENET_MEAN[:, None, None]) / IMAGENET_STD[:, None, None]
    return normalized.astype(np.float32)


class ImageCache:
    """Least-recently-used cache of preprocessed images, shared by the loader threads"""

    def __init__(self, max_size=512):
        self.cache = OrderedDict()
        self.max_size = max_size
        self._lock = threading.Lock()

    def __len__(self):
        with self._lock:
            return len(self.cache)

    def get(self, key):
        with self._lock:
            if key not in self.cache:
                return None
            self.cache.move_to_end(key)
            return self.cache[key]

    def put(self, key, value):
        if self.max_size <= 0:
            return
        with self._lock:
            if key in self.cache:
                self.cache.move_to_end(key)
            elif len(self.cache) >= self.max_size:
                self.cache.popitem(last=False)
            self.cache[key] = value


class ImageBatchLoader:
    """Decode + preprocess image files in parallel, keeping batch order"""

    def __init__(self, size: int = IMAGE_SIZE, max_workers: int = 4, cache_size: int = 512,
                 root: Optional[Union[str, Path]] = None):
        self.size = size
        self.max_workers = max(1, max_workers)
        self.root = Path(root) if root else None
        self._cache = ImageCache(cache_size)

    def _resolve(self, path: str) -> Path:
        candidate = Path(path)
        if not candidate.is_absolute() and self.root is not None:
            candidate = self.root / candidate
        return candidate

    def load_one(self, path: str) -> np.ndarray:
        cached = self._cache.get(path)
        if cached is not None:
            return cached
        tensor = preprocess_image(load_raster(self._resolve(path)), size=self.size)
        self._cache.put(path, tensor)
        return tensor

    def load(self, paths: Sequence[str]) -> np.ndarray:
        if self.max_workers == 1 or len(paths) < 2:
            images: List[np.ndarray] = [self.load_one(p) for p in paths]
        else:
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                images = list(executor.map(self.load_one, paths))
        return np.stack(images, axis=0) if images else np.zeros((0, 3, self.size, self.size), np.float32)
